"""Small reference models composed purely from the framework's own layers."""

from __future__ import annotations

from .nn import LinearLayer, relu, sigmoid, tanh
from .rng import Rng
from .spatial import Conv2dLayer, conv2d_fast, maxpool2d
from .tensor import Tensor, reshape
from .transformer import GPT


_HIDDEN_ACTS = {"relu": relu, "tanh": tanh, "sigmoid": sigmoid}


class MLP:
    """Linear stack with a hidden nonlinearity; raw logits out.  Inputs of
    any rank are flattened to (batch, features)."""

    def __init__(self, sizes: list[int], rng: Rng, hidden_act: str = "relu"):
        self.sizes = list(sizes)
        self.act = _HIDDEN_ACTS[hidden_act]
        self.layers = [LinearLayer(a, b, rng)
                       for a, b in zip(sizes, sizes[1:])]

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, layer in enumerate(self.layers):
            out.append((f"fc{i}.weight", layer.weight))
            out.append((f"fc{i}.bias", layer.bias))
        return out

    def parameter_count(self) -> int:
        return sum(l.parameter_count for l in self.layers)

    def forward(self, x: Tensor) -> Tensor:
        if x.rank > 2:
            x = reshape(x, (x.shape[0], -1))
        for layer in self.layers[:-1]:
            x = self.act(layer.forward(x))
        return self.layers[-1].forward(x)


class SigmoidHead:
    """Single linear unit squashed through a sigmoid (the 1958 setup)."""

    def __init__(self, in_features: int, rng: Rng):
        self.linear = LinearLayer(in_features, 1, rng)

    def parameters(self) -> list[Tensor]:
        return self.linear.parameters()

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [("weight", self.linear.weight), ("bias", self.linear.bias)]

    def forward(self, x: Tensor) -> Tensor:
        return sigmoid(self.linear.forward(x))


class SmallCNN:
    """conv(1->c1, 3x3, pad 1) -> relu -> pool2 -> conv(c1->c2) -> relu ->
    pool2 -> linear head; sized for 8x8 single-channel images."""

    def __init__(self, rng: Rng, classes: int = 10, c1: int = 8, c2: int = 16):
        self.conv1 = Conv2dLayer(1, c1, 3, rng, stride=1, padding=1)
        self.conv2 = Conv2dLayer(c1, c2, 3, rng, stride=1, padding=1)
        self.fc = LinearLayer(c2 * 2 * 2, classes, rng)
        self.c2 = c2

    def parameters(self) -> list[Tensor]:
        return (self.conv1.parameters() + self.conv2.parameters()
                + self.fc.parameters())

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [("conv1.weight", self.conv1.weight),
                ("conv1.bias", self.conv1.bias),
                ("conv2.weight", self.conv2.weight),
                ("conv2.bias", self.conv2.bias),
                ("fc.weight", self.fc.weight),
                ("fc.bias", self.fc.bias)]

    def parameter_count(self) -> int:
        return (self.conv1.parameter_count + self.conv2.parameter_count
                + self.fc.parameter_count)

    def forward(self, x: Tensor) -> Tensor:
        x = maxpool2d(relu(conv2d_fast(x, self.conv1)), 2, 2)
        x = maxpool2d(relu(conv2d_fast(x, self.conv2)), 2, 2)
        x = reshape(x, (x.shape[0], -1))
        return self.fc.forward(x)


class LMHead:
    """Adapter exposing a GPT as a (batch of sequences) -> flat logits model
    so the generic training loop and cross-entropy can drive it."""

    def __init__(self, gpt: GPT):
        self.gpt = gpt

    def parameters(self) -> list[Tensor]:
        return self.gpt.parameters()

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return self.gpt.named_parameters()

    def forward(self, ids: Tensor) -> Tensor:
        b, n = ids.shape
        logits = self.gpt.forward(ids)
        return reshape(logits, (b * n, self.gpt.cfg.vocab_size))
