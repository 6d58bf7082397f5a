"""Command-line entry point.

Subcommands: milestone, bench, profile, submit, graph, validate, datasets.
Exit codes: 0 success/pass, 1 milestone or validation failure, 2 usage error.
The compute paths import only this package's own modules; report rendering
(--report DIR) additionally uses matplotlib to drop figures next to the CSVs.
"""

from __future__ import annotations

import argparse
import json
import sys

from .autograd import enable_autograd, to_dot
from .bench import benchmark
from .data import save_digits, save_talks, synth_digits, synth_talks
from .errors import TallyError
from .milestones import (
    MILESTONE_NAMES,
    run_milestone,
    submission_pipeline,
    _digit_sets,
)
from .models import MLP, SmallCNN
from .nn import LinearLayer, cross_entropy_loss
from .profiler import profile
from .rng import Rng
from .spatial import Conv2dLayer, conv2d_fast, conv2d_naive
from .submission import validate_submission
from .tensor import DType, Tensor, matmul
from .training import checkpoint_restore
from .transformer import GPT, GPTConfig, generate


def _bench_targets() -> dict:
    rng = Rng(7)

    def make_matmul():
        a = Tensor(rng.uniform_array(128 * 128, -1, 1), shape=(128, 128))
        b = Tensor(rng.uniform_array(128 * 128, -1, 1), shape=(128, 128))
        return lambda: matmul(a, b)

    def make_conv(fast: bool):
        x = Tensor(rng.uniform_array(8 * 3 * 32 * 32, -1, 1),
                   shape=(8, 3, 32, 32))
        layer = Conv2dLayer(3, 32, 5, Rng(3), requires_grad=False)
        fn = conv2d_fast if fast else conv2d_naive
        return lambda: fn(x, layer)

    def make_generate(use_cache: bool):
        cfg = GPTConfig(vocab_size=256, d_model=32, n_heads=2, n_layers=2,
                        max_seq=64)
        model = GPT(cfg, seed=3)
        return lambda: generate(model, [2], 32, use_cache=use_cache)

    return {
        "matmul": make_matmul,
        "conv-naive": lambda: make_conv(False),
        "conv-fast": lambda: make_conv(True),
        "generate-cached": lambda: make_generate(True),
        "generate-uncached": lambda: make_generate(False),
    }


def _profile_targets() -> dict:
    def cnn_forward():
        ds = synth_digits(0, 64)
        from .data import DataLoader
        batch = next(iter(DataLoader(ds, 64))).inputs
        cnn = SmallCNN(Rng(0))
        from .milestones import _forward_region
        return [
            ("conv1", lambda: _forward_region(cnn, batch, 1)),
            ("conv2", lambda: _forward_region(cnn, batch, 2)),
            ("head", lambda: _forward_region(cnn, batch, 3)),
        ]

    def conv_compare():
        rng = Rng(5)
        x = Tensor(rng.uniform_array(2 * 3 * 16 * 16, -1, 1),
                   shape=(2, 3, 16, 16))
        layer = Conv2dLayer(3, 8, 3, Rng(5), requires_grad=False)
        return [
            ("conv-naive", lambda: conv2d_naive(x, layer)),
            ("conv-fast", lambda: conv2d_fast(x, layer)),
        ]

    def gpt_forward():
        cfg = GPTConfig(vocab_size=256, d_model=32, n_heads=2, n_layers=2,
                        max_seq=64)
        model = GPT(cfg, seed=3)
        ids = Tensor([[1] * 32], dtype=DType.INT64)
        return [("gpt-forward", lambda: model.forward(ids))]

    return {"cnn-forward": cnn_forward, "conv-compare": conv_compare,
            "gpt-forward": gpt_forward}


def _graph_demos() -> dict:
    def square():
        enable_autograd()
        x = Tensor([3.0], requires_grad=True)
        return x * x

    def linear():
        enable_autograd()
        layer = LinearLayer(4, 2, Rng(0))
        x = Tensor(Rng(1).uniform_array(3 * 4), shape=(3, 4))
        logits = layer.forward(x)
        targets = Tensor([0, 1, 0], dtype=DType.INT64)
        return cross_entropy_loss(logits, targets)

    def mlp():
        enable_autograd()
        model = MLP([4, 8, 3], Rng(0))
        x = Tensor(Rng(1).uniform_array(2 * 4), shape=(2, 4))
        targets = Tensor([0, 2], dtype=DType.INT64)
        return cross_entropy_loss(model.forward(x), targets)

    return {"square": square, "linear": linear, "mlp": mlp}


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tallygrad",
                                description="milestone harness and "
                                            "benchmark toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("milestone", help="run a historical milestone")
    m.add_argument("id", choices=[str(i) for i in range(1, 7)] + ["all"])
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--json", action="store_true")
    m.add_argument("--report", metavar="DIR")
    m.add_argument("--out", help="submission path (milestone 6)")

    b = sub.add_parser("bench", help="microbenchmark a named target")
    b.add_argument("target", choices=sorted(_bench_targets()))
    b.add_argument("--warmup", type=int, default=2)
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--level", type=float, default=0.95)
    b.add_argument("--json", action="store_true")
    b.add_argument("--report", metavar="DIR")

    pr = sub.add_parser("profile", help="profile a named target")
    pr.add_argument("target", choices=sorted(_profile_targets()))
    pr.add_argument("--json", action="store_true")
    pr.add_argument("--report", metavar="DIR")

    s = sub.add_parser("submit", help="optimization pipeline on a checkpoint")
    s.add_argument("--model", required=True, help="CNN checkpoint path")
    s.add_argument("--out", required=True, help="submission JSON path")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--json", action="store_true")

    g = sub.add_parser("graph", help="inspect a demo computation graph")
    g.add_argument("demo", choices=sorted(_graph_demos()))
    g.add_argument("--dot", action="store_true",
                   help="emit DOT text instead of a summary")

    v = sub.add_parser("validate", help="validate a submission file")
    v.add_argument("path")
    v.add_argument("--json", action="store_true")

    d = sub.add_parser("datasets", help="export the procedural datasets")
    d.add_argument("--out", required=True, metavar="DIR")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--count", type=int, default=1000)
    return p


def _cmd_milestone(args) -> int:
    ids = list(range(1, 7)) if args.id == "all" else [int(args.id)]
    failures = 0
    for mid in ids:
        kwargs = {}
        if mid == 6 and args.out:
            kwargs["out_path"] = args.out
        result = run_milestone(mid, seed=args.seed, **kwargs)
        if args.json:
            print(json.dumps(result.metrics_json()))
        else:
            status = "PASS" if result.passed else "FAIL"
            print(f"[{status}] milestone {mid}: {MILESTONE_NAMES[mid]} "
                  f"({result.wall_time:.1f}s)")
            for line in result.lines:
                print(f"    {line}")
        if args.report:
            from .report import write_milestone_report
            for path in write_milestone_report(result, args.report):
                print(f"    wrote {path}")
        failures += 0 if result.passed else 1
    return 0 if failures == 0 else 1


def _cmd_bench(args) -> int:
    fn = _bench_targets()[args.target]()
    result = benchmark(fn, warmup_count=args.warmup,
                       repeat_count=args.repeats,
                       confidence_level=args.level)
    if args.json:
        print(result.to_json())
    else:
        print(f"{args.target}: mean {result.mean_ns / 1e6:.3f} ms  "
              f"std {result.std_ns / 1e6:.3f} ms  "
              f"{int(result.ci_level * 100)}% CI "
              f"[{result.ci_lo_ns / 1e6:.3f}, {result.ci_hi_ns / 1e6:.3f}] ms "
              f"({result.repeats} runs, {result.warmup} warm-up)")
    if args.report:
        from .report import write_bench_report
        for path in write_bench_report(result, args.target, args.report):
            print(f"    wrote {path}")
    return 0


def _cmd_profile(args) -> int:
    regions = _profile_targets()[args.target]()
    report = profile(regions)
    if args.json:
        print(report.to_json())
    else:
        print(f"{args.target}: total {report.total_wall_ns / 1e6:.2f} ms "
              f"(timing overhead bound {report.overhead_ns} ns)")
        for r in report.regions:
            print(f"    {r.label:<12} {r.wall_ns / 1e6:9.3f} ms "
                  f"{r.fraction:6.1%}  alloc {r.alloc_bytes:>10} B  "
                  f"macs {r.macs}")
    if args.report:
        from .report import write_profile_report
        for path in write_profile_report(report, args.target, args.report):
            print(f"    wrote {path}")
    return 0


def _cmd_submit(args) -> int:
    enable_autograd()
    cnn = SmallCNN(Rng(args.seed))
    checkpoint_restore(dict(cnn.named_parameters()), args.model)
    _, test_ds = _digit_sets(args.seed)
    metrics, lines = submission_pipeline(cnn, test_ds, args.seed, args.out)
    if args.json:
        print(json.dumps(metrics))
    else:
        for line in lines:
            print(line)
    return 0 if metrics["submission_valid"] == 1.0 else 1


def _cmd_graph(args) -> int:
    result = _graph_demos()[args.demo]()
    if args.dot:
        print(to_dot(result))
    else:
        from .autograd import count_graph
        stats = count_graph(result)
        print(f"{args.demo}: {stats.node_count} nodes, "
              f"{stats.saved_bytes} saved bytes")
    return 0


def _cmd_validate(args) -> int:
    valid, violations = validate_submission(args.path)
    if args.json:
        print(json.dumps({"valid": valid, "violations": violations}))
    else:
        print("valid" if valid else "invalid:")
        for v in violations:
            print(f"    {v}")
    return 0 if valid else 1


def _cmd_datasets(args) -> int:
    import os
    os.makedirs(args.out, exist_ok=True)
    digits = synth_digits(args.seed, args.count)
    save_digits(digits, os.path.join(args.out, "digits"))
    talks = synth_talks(args.seed)
    save_talks(talks, os.path.join(args.out, "talks.txt"))
    print(f"wrote {args.count} digit images and the Q&A corpus to {args.out}")
    return 0


_COMMANDS = {
    "milestone": _cmd_milestone,
    "bench": _cmd_bench,
    "profile": _cmd_profile,
    "submit": _cmd_submit,
    "graph": _cmd_graph,
    "validate": _cmd_validate,
    "datasets": _cmd_datasets,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except TallyError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
