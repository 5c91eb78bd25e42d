"""``matrec`` command line: ingest, train, evaluate, sweep, baseline.

Every random draw derives from ``--seed``; identical flags give identical
output files. Outputs are written to a temp file and renamed into place.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import baselines, dataio, evalkit, model as mf
from .errors import MatRecError
from .kernels import BACKEND

_log = logging.getLogger("matrec")


class UsageError(Exception):
    pass


def _existing_file(value: str) -> Path:
    path = Path(value)
    if not path.is_file():
        raise argparse.ArgumentTypeError(f"no such file: {value}")
    return path


def _positive_float(value: str) -> float:
    try:
        v = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {value!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0: {value!r}")
    return v


def _non_negative_float(value: str) -> float:
    try:
        v = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {value!r}") from None
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0: {value!r}")
    return v


def _fraction(value: str) -> float:
    v = _non_negative_float(value)
    if v >= 1:
        raise argparse.ArgumentTypeError(f"must be in [0, 1): {value!r}")
    return v


def _seed(value: str) -> int:
    try:
        v = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {value!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _positive_int(value: str) -> int:
    try:
        v = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {value!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {value!r}")
    return v


def _non_negative_int(value: str) -> int:
    try:
        v = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {value!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0: {value!r}")
    return v


def _lr_list(value: str) -> list[float]:
    return [_positive_float(v.strip()) for v in value.split(",") if v.strip()]


def _add_data_args(p: argparse.ArgumentParser, split: bool = True):
    p.add_argument("--dataset", required=True, choices=["lastfm", "movielens", "canonical"])
    p.add_argument("--path", required=True, type=_existing_file, help="ratings file")
    p.add_argument("--norm", choices=["per-user-max", "global-max"], default=None,
                   help="rating normalization (default: per-user-max for lastfm, global-max for movielens)")
    p.add_argument("--seed", type=_seed, default=42)
    if split:
        p.add_argument("--split", type=_fraction, default=0.2, help="test fraction")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="matrec",
        description="Rank-aware cosine matrix factorization with ALS and BPR baselines.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("ingest", help="parse and normalize a ratings file into the canonical CSV")
    _add_data_args(p, split=False)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("train", help="train the rank-aware model and report test MAE")
    _add_data_args(p)
    p.add_argument("--lr", type=_positive_float, default=3e-4)
    p.add_argument("--epochs", type=_non_negative_int, default=300)
    p.add_argument("--dim", type=_positive_int, default=20)
    p.add_argument("--eps", type=_positive_float, default=1e-12, help="feature-norm guard")
    p.add_argument("--out", required=True, type=Path, help="model factor dump")
    p.add_argument("--report", type=Path, help="report CSV (default: <out>.report.csv)")
    p.add_argument("--trace", type=Path, help="per-epoch training loss table")

    p = sub.add_parser("evaluate", help="score a saved model on the test split")
    _add_data_args(p)
    p.add_argument("--model", required=True, type=_existing_file)
    p.add_argument("--out", type=Path, help="report CSV")

    p = sub.add_parser("sweep", help="MAE as a function of the learning rate")
    _add_data_args(p)
    p.add_argument("--algo", choices=["matrec", "bpr"], required=True)
    p.add_argument("--lrs", type=_lr_list, default=[1e-5, 3e-5, 1e-4, 3e-4, 1e-3])
    p.add_argument("--epochs", type=_non_negative_int, default=300, help="matrec passes")
    p.add_argument("--iterations", type=_non_negative_int, default=20, help="bpr epochs")
    p.add_argument("--dim", type=_positive_int, default=20)
    p.add_argument("--reg", type=_non_negative_float, default=0.01, help="bpr L2 weight")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("baseline", help="train and evaluate ALS or BPR")
    _add_data_args(p)
    p.add_argument("--algo", choices=["als", "bpr"], required=True)
    p.add_argument("--rank", type=_positive_int, default=10, help="als rank")
    p.add_argument("--dim", type=_positive_int, default=20, help="bpr dimension")
    p.add_argument("--iterations", type=_non_negative_int, default=None,
                   help="default 10 for als, 20 for bpr")
    p.add_argument("--reg", type=_non_negative_float, default=None,
                   help="default 0.1 for als, 0.01 for bpr")
    p.add_argument("--lr", type=_positive_float, default=0.05, help="bpr learning rate")
    p.add_argument("--out", required=True, type=Path, help="report CSV")
    p.add_argument("--model", dest="model_out", type=Path, help="optional factor dump")
    return parser


def _load(args):
    ds = dataio.load(args.dataset, args.path, args.norm)
    return ds


def _prepare(args):
    return evalkit.prepare(_load(args), args.split, args.seed)


def _finish(report: evalkit.EvalReport, path: Path):
    report.metadata.setdefault("seed", None)
    dataio.atomic_write_text(path, report.to_csv())
    print(report.summary())


def cmd_ingest(args) -> int:
    ds = _load(args)
    dataio.write_canonical(ds, args.out)
    print(f"dataset={ds.name} users={ds.n_users} items={ds.n_items} ratings={len(ds)} "
          f"scheme={ds.scheme} out={args.out}")
    return 0


def cmd_train(args) -> int:
    prep = _prepare(args)
    config = {"dim": args.dim, "epochs": args.epochs, "learning_rate": args.lr, "norm_epsilon": args.eps}
    model, report = evalkit.run("matrec", prep, config, args.seed)
    report.metadata.update({"test_fraction": args.split, "kernels": BACKEND})
    dataio.atomic_write_text(args.out, mf.dump_params(model.params))
    if args.trace:
        dataio.atomic_write_text(args.trace, model.trace.to_table())
    report_path = args.report or args.out.with_name(args.out.name + ".report.csv")
    _finish(report, report_path)
    return 0


def load_model(path: Path, prep: evalkit.Prepared):
    text = path.read_text(encoding="utf-8")
    kind = text.split(" ", 1)[0]
    train_mean = float(prep.train.ratings.mean())
    if kind == "matrec":
        return mf.MatRecModel(mf.parse_params(text), prep.ranks, train_mean)
    if kind == "als":
        return baselines.parse_als(text)
    if kind == "bpr":
        return baselines.parse_bpr(text)
    raise UsageError(f"{path}: unrecognized model file")


def cmd_evaluate(args) -> int:
    prep = _prepare(args)
    model = load_model(args.model, prep)
    report = evalkit.evaluate(model, prep.test, prep.ranks)
    report.metadata.update({"algorithm": model.algorithm, "seed": args.seed, "test_fraction": args.split})
    if args.out:
        _finish(report, args.out)
    else:
        print(report.summary())
    return 0


def cmd_sweep(args) -> int:
    prep = _prepare(args)
    if args.algo == "matrec":
        config = {"dim": args.dim, "epochs": args.epochs}
    else:
        config = {"dim": args.dim, "iterations": args.iterations, "reg": args.reg}
    curve = evalkit.sweep_learning_rate(args.algo, prep, sorted(set(args.lrs)), config, args.seed)
    dataio.atomic_write_text(args.out, curve.to_csv())
    eta, best = curve.best()
    print(f"algorithm={args.algo} dataset={prep.test.name} best_eta={eta!r} mae={best.mae:.6f} "
          f"seed={args.seed} points={len(curve.points)}")
    return 0


def cmd_baseline(args) -> int:
    prep = _prepare(args)
    if args.algo == "als":
        config = {"rank": args.rank, "iterations": 10 if args.iterations is None else args.iterations,
                  "reg": 0.1 if args.reg is None else args.reg}
    else:
        config = {"dim": args.dim, "iterations": 20 if args.iterations is None else args.iterations,
                  "learning_rate": args.lr, "reg": 0.01 if args.reg is None else args.reg}
    model, report = evalkit.run(args.algo, prep, config, args.seed)
    report.metadata["test_fraction"] = args.split
    if args.model_out:
        text = baselines.dump_als(model) if args.algo == "als" else baselines.dump_bpr(model)
        dataio.atomic_write_text(args.model_out, text)
    _finish(report, args.out)
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "baseline": cmd_baseline,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"matrec: error: {exc}", file=sys.stderr)
        return 2
    except (MatRecError, OSError) as exc:
        print(f"matrec: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
