"""Datasets, the batching DataLoader, and the two procedural offline corpora.

Both synthesizers are pure functions of their seed (drawing from the
portable splitmix64 stream), so datasets are byte-identical across runs and
platforms and nothing is ever downloaded.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .rng import Rng
from .tensor import DType, Tensor


class Dataset:
    """Index-addressable sample store; valid indices are [0, len) exactly."""

    def __len__(self) -> int:
        raise NotImplementedError

    def __getitem__(self, i: int):
        raise NotImplementedError

    def _check_index(self, i: int) -> int:
        if not 0 <= i < len(self):
            raise IndexError(f"index {i} out of range [0, {len(self)})")
        return i


class ArrayDataset(Dataset):
    """In-memory (inputs, targets) pairs backed by two aligned arrays."""

    def __init__(self, inputs: np.ndarray, targets: np.ndarray,
                 input_dtype: DType = DType.FLOAT32,
                 target_dtype: DType = DType.INT64):
        if len(inputs) != len(targets):
            raise DomainError("inputs and targets must have equal length")
        self._inputs = inputs
        self._targets = targets
        self._input_dtype = input_dtype
        self._target_dtype = target_dtype

    def __len__(self) -> int:
        return len(self._inputs)

    def __getitem__(self, i: int):
        i = self._check_index(i)
        x = Tensor._wrap(np.asarray(self._inputs[i]), self._input_dtype)
        y = Tensor._wrap(np.asarray(self._targets[i]), self._target_dtype)
        return x, y


@dataclass
class Batch:
    inputs: Tensor
    targets: Tensor

    def __len__(self) -> int:
        return self.inputs.shape[0]


class DataLoader:
    """Yields batches of stacked samples; shuffling is a seeded permutation,
    deterministic per (seed, epoch)."""

    def __init__(self, ds: Dataset, batch_size: int, shuffle: bool = False,
                 seed: int = 0, drop_last: bool = False):
        if batch_size < 1:
            raise DomainError("batch_size must be >= 1")
        self.ds = ds
        self.batch_size = batch_size
        self.shuffle = shuffle
        self.seed = seed
        self.drop_last = drop_last
        self._epoch = 0

    def __len__(self) -> int:
        n = len(self.ds)
        if self.drop_last:
            return n // self.batch_size
        return (n + self.batch_size - 1) // self.batch_size

    def __iter__(self):
        n = len(self.ds)
        order = list(range(n))
        if self.shuffle:
            Rng(self.seed).derive(self._epoch).shuffle(order)
        self._epoch += 1
        for start in range(0, n, self.batch_size):
            idx = order[start:start + self.batch_size]
            if self.drop_last and len(idx) < self.batch_size:
                return
            samples = [self.ds[i] for i in idx]
            yield Batch(inputs=_stack([s[0] for s in samples]),
                        targets=_stack([s[1] for s in samples]))


def _stack(tensors: list[Tensor]) -> Tensor:
    arrs = [t.nd for t in tensors]
    return Tensor._wrap(np.stack(arrs, axis=0), tensors[0].dtype)


def dataloader_iterate(ds: Dataset, batch_size: int, shuffle: bool = False,
                       seed: int = 0, drop_last: bool = False):
    """One epoch of batches (functional form of DataLoader)."""
    yield from DataLoader(ds, batch_size, shuffle, seed, drop_last)


# --- procedural digits -----------------------------------------------------

_GLYPHS = [
    # 0
    ("........",
     "..####..",
     ".##..##.",
     ".##..##.",
     ".##..##.",
     ".##..##.",
     "..####..",
     "........"),
    # 1
    ("........",
     "...##...",
     "..###...",
     "...##...",
     "...##...",
     "...##...",
     "..####..",
     "........"),
    # 2
    ("........",
     "..####..",
     ".##..##.",
     "....##..",
     "...##...",
     "..##....",
     ".######.",
     "........"),
    # 3
    ("........",
     ".#####..",
     ".....##.",
     "..####..",
     ".....##.",
     ".....##.",
     ".#####..",
     "........"),
    # 4
    ("........",
     "...###..",
     "..#.##..",
     ".#..##..",
     ".######.",
     "....##..",
     "....##..",
     "........"),
    # 5
    ("........",
     ".######.",
     ".##.....",
     ".#####..",
     ".....##.",
     ".....##.",
     ".#####..",
     "........"),
    # 6
    ("........",
     "..####..",
     ".##.....",
     ".#####..",
     ".##..##.",
     ".##..##.",
     "..####..",
     "........"),
    # 7
    ("........",
     ".######.",
     ".....##.",
     "....##..",
     "...##...",
     "..##....",
     "..##....",
     "........"),
    # 8
    ("........",
     "..####..",
     ".##..##.",
     "..####..",
     ".##..##.",
     ".##..##.",
     "..####..",
     "........"),
    # 9
    ("........",
     "..####..",
     ".##..##.",
     ".##..##.",
     "..#####.",
     ".....##.",
     "..####..",
     "........"),
]

IMAGE_SIZE = 8


def digit_templates() -> np.ndarray:
    """The ten fixed glyphs as a (10, 8, 8) float array in {0, 1}."""
    out = np.zeros((10, IMAGE_SIZE, IMAGE_SIZE), dtype=np.float32)
    for d, rows in enumerate(_GLYPHS):
        for r, row in enumerate(rows):
            for c, ch in enumerate(row):
                if ch == "#":
                    out[d, r, c] = 1.0
    return out


def _sample_affine(img: np.ndarray, angle_rad: float, dx: float,
                   dy: float) -> np.ndarray:
    """Rotate about the center then translate, bilinear, zero fill."""
    n = img.shape[0]
    center = (n - 1) / 2.0
    rr, cc = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    # inverse map: where does each output pixel come from
    yr = rr - center - dy
    xc = cc - center - dx
    cos_t, sin_t = math.cos(angle_rad), math.sin(angle_rad)
    src_r = cos_t * yr + sin_t * xc + center
    src_c = -sin_t * yr + cos_t * xc + center
    r0 = np.floor(src_r).astype(np.int64)
    c0 = np.floor(src_c).astype(np.int64)
    fr = src_r - r0
    fc = src_c - c0
    out = np.zeros((n, n), dtype=np.float64)
    for ro, co, w in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc),
                      (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
        r = r0 + ro
        c = c0 + co
        valid = (r >= 0) & (r < n) & (c >= 0) & (c < n)
        vals = np.zeros((n, n), dtype=np.float64)
        vals[valid] = img[r[valid], c[valid]]
        out += w * vals
    return out


class DigitsDataset(Dataset):
    def __init__(self, images: np.ndarray, labels: np.ndarray):
        self.images = images  # (count, 1, 8, 8) float32 in [0, 1]
        self.labels = labels  # (count,) int64

    def __len__(self) -> int:
        return len(self.images)

    def __getitem__(self, i: int):
        i = self._check_index(i)
        return (Tensor._wrap(self.images[i]),
                Tensor._wrap(self.labels[i], DType.INT64))


def synth_digits(seed: int, count: int, noise_sigma: float = 0.1,
                 max_rotation_deg: float = 10.0,
                 max_shift_px: float = 1.0) -> DigitsDataset:
    """Procedural 8x8 grayscale digit images: the ten fixed glyph templates
    under seeded affine jitter plus clamped additive noise.  Labels cycle
    through the classes so counts stay balanced within one sample."""
    if count < 10:
        raise DomainError("synth_digits needs count >= 10")
    templates = digit_templates()
    rng = Rng(seed)
    images = np.zeros((count, 1, IMAGE_SIZE, IMAGE_SIZE), dtype=np.float32)
    labels = np.zeros(count, dtype=np.int64)
    max_rot = math.radians(max_rotation_deg)
    for i in range(count):
        digit = i % 10
        labels[i] = digit
        angle = rng.uniform(-max_rot, max_rot)
        dx = rng.uniform(-max_shift_px, max_shift_px)
        dy = rng.uniform(-max_shift_px, max_shift_px)
        img = _sample_affine(templates[digit], angle, dx, dy)
        if noise_sigma > 0:
            img = img + rng.normal_array(IMAGE_SIZE * IMAGE_SIZE,
                                         noise_sigma).reshape(img.shape)
        images[i, 0] = np.clip(img, 0.0, 1.0).astype(np.float32)
    return DigitsDataset(images, labels)


def save_digits(ds: DigitsDataset, prefix: str) -> None:
    """Raw little-endian Float32 pixels plus a JSON manifest."""
    with open(prefix + ".f32", "wb") as f:
        f.write(ds.images.astype("<f4").tobytes())
    manifest = {"shape": list(ds.images.shape),
                "labels": ds.labels.tolist()}
    with open(prefix + ".json", "w", encoding="utf-8") as f:
        json.dump(manifest, f)


def load_digits(prefix: str) -> DigitsDataset:
    with open(prefix + ".json", "r", encoding="utf-8") as f:
        manifest = json.load(f)
    shape = tuple(manifest["shape"])
    raw = np.fromfile(prefix + ".f32", dtype="<f4").reshape(shape)
    return DigitsDataset(raw.astype(np.float32),
                         np.asarray(manifest["labels"], dtype=np.int64))


# --- procedural Q&A text ----------------------------------------------------

_SUBJECTS = ["the cat", "the dog", "the farmer", "the teacher", "the robot",
             "the child", "the bird", "the fox", "the baker", "the sailor",
             "the painter", "the miller", "the nurse", "the pilot",
             "the turtle", "the rabbit"]
_VERBS = [("like", "likes"), ("see", "sees"), ("find", "finds"),
          ("want", "wants"), ("make", "makes"), ("hold", "holds"),
          ("paint", "paints"), ("carry", "carries"), ("watch", "watches"),
          ("follow", "follows"), ("clean", "cleans"), ("count", "counts")]
_OBJECTS = ["apples", "books", "stones", "flowers", "songs", "maps", "boats",
            "lamps", "trees", "coins", "shells", "ropes", "kites", "drums",
            "cakes", "chairs", "clocks", "boxes", "bells", "pears"]
_ADJECTIVES = ["red", "blue", "green", "small", "old", "bright", "quiet",
               "round", "warm", "heavy"]
_PLACES = ["in the garden", "near the lake", "on the hill", "by the sea",
           "in the barn", "under the bridge", "at the market",
           "behind the house", "in the forest", "near the tower"]
_NUMBERS = ["two", "three", "four", "five", "six", "seven", "eight", "nine",
            "ten", "twelve"]
_NOUNS = ["door", "roof", "cart", "sail", "field", "wall", "gate", "well",
          "path", "bench"]


def synth_talks(seed: int = 0, pairs: int = 350) -> str:
    """Template-grammar Q&A corpus, one "Q: ...\\tA: ..." pair per line."""
    rng = Rng(seed)
    lines = []
    for _ in range(pairs):
        kind = rng.randint(5)
        if kind == 0:
            subj = rng.choice(_SUBJECTS)
            base, third = rng.choice(_VERBS)
            adj = rng.choice(_ADJECTIVES)
            obj = rng.choice(_OBJECTS)
            q = f"what does {subj} {base}?"
            a = f"{subj} {third} {adj} {obj}."
        elif kind == 1:
            subj = rng.choice(_SUBJECTS)
            place = rng.choice(_PLACES)
            q = f"where is {subj}?"
            a = f"{subj} is {place}."
        elif kind == 2:
            obj = rng.choice(_OBJECTS)
            subj = rng.choice(_SUBJECTS)
            _, third = rng.choice(_VERBS)
            q = f"who {third} the {obj}?"
            a = f"{subj} {third} the {obj}."
        elif kind == 3:
            subj = rng.choice(_SUBJECTS)
            num = rng.choice(_NUMBERS)
            obj = rng.choice(_OBJECTS)
            q = f"how many {obj} does {subj} have?"
            a = f"{subj} has {num} {obj}."
        else:
            noun = rng.choice(_NOUNS)
            adj = rng.choice(_ADJECTIVES)
            q = f"what color is the {noun}?"
            a = f"the {noun} is {adj}."
        lines.append(f"Q: {q}\tA: {a}")
    return "\n".join(lines) + "\n"


def save_talks(text: str, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
