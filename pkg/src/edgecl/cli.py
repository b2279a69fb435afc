"""Command-line entry point: synth, run, grid, serve, inspect.

Exit codes: 0 success, 1 user error (bad flags, bad files), 2 internal
error. Exported CSVs embed the exact invocation as a header comment so any
result file can be reproduced from a shell line.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
import traceback
from pathlib import Path

from .benchmark import RunConfig, export_grid, export_metrics, run_grid, run_stream
from .buffer import BufferConfig
from .data import (
    SynthSpec,
    generate_synthetic,
    load_manifest,
    read_fpb_header,
    save_fpb,
    save_manifest,
)
from .errors import FormatError
from .head import TrainConfig, load_head
from .trainer import load_session


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with 2; contract says 1
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(
        prog="edgecl",
        description="Continual-learning head training on feature streams.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="command")

    p = sub.add_parser(
        "synth",
        help="generate a synthetic feature stream (FPB1 files + manifest)",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--classes", type=int, default=10, help="number of classes")
    p.add_argument("--instances", type=int, default=1, help="instances per class")
    p.add_argument("--samples", type=int, default=100, help="samples per (class, instance)")
    p.add_argument("--dim", type=int, default=32, help="feature dimension")
    p.add_argument("--sigma-between", type=float, default=3.0, help="class mean spread")
    p.add_argument("--sigma-within", type=float, default=0.5, help="sample noise")
    p.add_argument("--sigma-instance", type=float, default=1.0, help="instance offset scale")
    p.add_argument("--seed", type=int, default=1, help="generator seed")
    p.add_argument("--out-dir", default="synth_data", help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser(
        "run",
        help="run a manifest stream and export per-batch metrics",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    _add_run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser(
        "grid",
        help="sweep one configuration axis over a manifest stream",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    _add_run_flags(p)
    p.add_argument("--axis", choices=("capacity", "policy", "schedule"), help="sweep axis")
    p.add_argument("--values", help="comma-separated axis values")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser(
        "serve",
        help="serve the interactive session API (and optional UI bundle)",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--host", default="127.0.0.1", help="bind address")
    p.add_argument("--port", type=int, default=8000, help="port (0 picks a free one)")
    p.add_argument("--dim", type=int, default=1280, help="default feature dimension")
    p.add_argument("--classes", type=int, default=4, help="default class count")
    p.add_argument("--capacity", type=int, default=40, help="default buffer capacity")
    p.add_argument("--quota", type=int, default=10, help="default per-class intake quota")
    p.add_argument("--session-timeout", type=float, default=3600.0, help="idle expiry seconds")
    p.add_argument("--static-dir", default=None, help="directory with the UI bundle")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser(
        "inspect",
        help="print a summary of an FPB1/HDP1/SES1 file or a manifest",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("path", help="file to inspect")
    p.set_defaults(func=cmd_inspect)

    return parser


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", help="stream manifest path", required=False)
    p.add_argument("--mode", choices=("tl", "cl"), help="session mode")
    p.add_argument("--capacity", type=int, default=None, help="replay buffer capacity (cl)")
    p.add_argument("--policy", choices=("fifo", "random"), default=None, help="eviction policy (cl; default random)")
    p.add_argument("--replace-frac", type=float, default=None, help="intake fraction of capacity (cl; default 0.015)")
    p.add_argument("--schedule", choices=("sequential", "mixed"), default=None, help="replay schedule (cl; default sequential)")
    p.add_argument("--quota", type=int, default=None, help="per-class intake quota (cl; default k-rule)")
    p.add_argument("--lr", type=float, default=0.5, help="SGD learning rate")
    p.add_argument("--epochs", type=int, default=20, help="epochs per training batch")
    p.add_argument("--minibatch", type=int, default=16, help="minibatch size")
    p.add_argument("--seed", type=int, action="append", default=None, help="seed (repeatable; default 0)")
    p.add_argument("--eval-every", type=int, default=1, help="evaluate every Nth batch")
    p.add_argument("--out", default="metrics.csv", help="output file")
    p.add_argument("--format", choices=("csv", "structured"), default="csv", help="export format")
    p.add_argument("--timing", action="store_true", help="include wall-clock ms in CSV (breaks byte reproducibility)")


def _run_config(args) -> RunConfig:
    if not args.manifest:
        raise UsageError("--manifest is required")
    if not args.mode:
        raise UsageError("--mode is required")
    cl_flags = {
        "--capacity": args.capacity,
        "--policy": args.policy,
        "--replace-frac": args.replace_frac,
        "--schedule": args.schedule,
        "--quota": args.quota,
    }
    if args.mode == "tl":
        given = [name for name, val in cl_flags.items() if val is not None]
        if given:
            raise UsageError(f"{', '.join(given)} only apply to --mode cl")
        buffer_config = None
    else:
        if args.capacity is None:
            raise UsageError("--mode cl requires --capacity")
        buffer_config = BufferConfig(
            capacity=args.capacity,
            policy=args.policy or "random",
            replace_fraction=args.replace_frac if args.replace_frac is not None else 0.015,
        )
    train_config = TrainConfig(
        learning_rate=args.lr,
        epochs_per_batch=args.epochs,
        minibatch_size=args.minibatch,
        replay_schedule=args.schedule or "sequential",
    )
    seeds = tuple(args.seed) if args.seed else (0,)
    return RunConfig(
        manifest=args.manifest,
        mode=args.mode,
        train_config=train_config,
        buffer_config=buffer_config,
        seeds=seeds,
        eval_every=args.eval_every,
        intake_quota=args.quota,
    )


def cmd_synth(args) -> int:
    spec = SynthSpec(
        num_classes=args.classes,
        instances_per_class=args.instances,
        samples_per_instance=args.samples,
        dim=args.dim,
        between_class_spread=args.sigma_between,
        within_class_noise=args.sigma_within,
        instance_offset=args.sigma_instance,
        seed=args.seed,
    )
    train, test, manifest = generate_synthetic(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_fpb(train, out / "train.fpb")
    save_fpb(test, out / "test.fpb")
    save_manifest(manifest, out / "manifest.json")
    print(
        f"wrote {len(manifest.batches)} batches ({len(train)} train / {len(test)} test "
        f"patterns, dim {spec.dim}) to {out / 'manifest.json'}"
    )
    return 0


def cmd_run(args) -> int:
    config = _run_config(args)
    results = run_stream(config)
    export_metrics(
        results, args.out, format=args.format,
        include_timing=args.timing, comment=args.invocation,
    )
    for seed, records in results.items():
        ok = [r for r in records if r.error is None]
        if ok:
            print(f"seed {seed}: last accuracy {ok[-1].accuracy:.4f} ({len(records)} records)")
        else:
            print(f"seed {seed}: failed ({records[-1].error if records else 'no records'})")
    print(f"metrics written to {args.out}")
    return 0


def cmd_grid(args) -> int:
    if not args.axis:
        raise UsageError("--axis is required")
    if not args.values:
        raise UsageError("--values is required and must be non-empty")
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise UsageError("--values is required and must be non-empty")
    axis = {"capacity": "buffer_capacity", "policy": "policy", "schedule": "schedule"}[args.axis]
    if axis == "buffer_capacity":
        try:
            values = [int(v) for v in values]
        except ValueError as e:
            raise UsageError(f"capacity values must be integers: {e}")
    config = _run_config(args)
    result = run_grid(config, axis, values)
    export_grid(result, args.out, comment=args.invocation)
    for agg in result.aggregate():
        print(
            f"{args.axis}={agg['value']}: final accuracy {agg['final_mean']:.4f} "
            f"+- {agg['final_std']:.4f} over {agg['n']} seed(s)"
        )
    print(f"grid written to {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(
        default_dim=args.dim,
        default_classes=args.classes,
        default_capacity=args.capacity,
        default_quota=args.quota,
        idle_timeout_s=args.session_timeout,
        static_dir=args.static_dir,
    )
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((args.host, args.port))  # bind failure propagates -> exit 2
    host, port = sock.getsockname()[:2]
    print(f"serving on http://{host}:{port} (dim={args.dim}, classes={args.classes})", flush=True)
    server = uvicorn.Server(uvicorn.Config(app, log_level="warning"))
    server.run(sockets=[sock])
    return 0


def cmd_inspect(args) -> int:
    path = Path(args.path)
    if not path.exists():
        raise UsageError(f"no such file: {path}")
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic == b"FPB1":
        dim, count = read_fpb_header(path)
        print(f"{path}: feature file, dim {dim}, {count} patterns")
    elif magic == b"HDP1":
        params = load_head(path)
        print(
            f"{path}: head snapshot, dim {params.dim}, hidden {params.hidden}, "
            f"classes {params.classes}"
        )
    elif magic == b"SES1":
        session = load_session(path)
        buf = (
            f", buffer {session.buffer.occupancy}/{session.buffer_config.capacity} "
            f"({session.buffer_config.policy})"
            if session.mode == "cl"
            else ""
        )
        print(
            f"{path}: session snapshot, mode {session.mode}, dim {session.dim}, "
            f"classes {session.classes}{buf}"
        )
    else:
        try:
            manifest = load_manifest(path, check=False)
        except (FormatError, json.JSONDecodeError, UnicodeDecodeError):
            raise UsageError(f"{path}: not a recognized edgecl file")
        print(
            f"{path}: manifest, scenario {manifest.scenario}, dim {manifest.dim}, "
            f"{manifest.num_classes} classes, {len(manifest.batches)} batches"
        )
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if not getattr(args, "func", None):
        parser.print_help()
        return 1
    args.invocation = "edgecl " + " ".join(argv)
    try:
        return args.func(args)
    except (UsageError, FormatError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 0
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
