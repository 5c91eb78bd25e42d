"""MAE evaluation and learning-rate sweeps."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import baselines, dataio, model as mf
from .dataio import RatingDataset
from .errors import InvalidArgumentError, InvalidStateError, MatRecError
from .ranking import RankTable, compute_ranks

_log = logging.getLogger(__name__)

ALGORITHMS = ("matrec", "als", "bpr")


def mae(predictions, truths) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1:
        raise InvalidArgumentError(f"length mismatch: {p.shape} vs {t.shape}")
    if len(p) == 0:
        raise InvalidArgumentError("cannot take the MAE of nothing")
    return float(np.mean(np.abs(p - t)))


@dataclass
class EvalReport:
    mae: float
    n_evaluated: int
    n_fallbacks: int
    scale: str = "normalized"
    mae_original: float | None = None
    metadata: dict = field(default_factory=dict)

    FIELDS = ("algorithm", "dataset", "mae", "mae_original", "n_evaluated", "n_fallbacks", "scale")

    def row(self) -> dict:
        row = {
            "algorithm": self.metadata.get("algorithm", ""),
            "dataset": self.metadata.get("dataset", ""),
            "mae": repr(self.mae),
            "mae_original": "" if self.mae_original is None else repr(self.mae_original),
            "n_evaluated": str(self.n_evaluated),
            "n_fallbacks": str(self.n_fallbacks),
            "scale": self.scale,
        }
        for key in sorted(k for k in self.metadata if k not in ("algorithm", "dataset")):
            row[key] = _fmt(self.metadata[key])
        return row

    def to_csv(self) -> str:
        row = self.row()
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
        writer.writeheader()
        writer.writerow(row)
        return buf.getvalue()

    def summary(self) -> str:
        md = self.metadata
        line = f"algorithm={md.get('algorithm')} dataset={md.get('dataset')} mae={self.mae:.6f}"
        if self.mae_original is not None:
            line += f" mae_original={self.mae_original:.6f}"
        return line + f" seed={md.get('seed')}"


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def evaluate(model, test: RatingDataset, ranks: RankTable) -> EvalReport:
    """MAE on ``test`` with predictions clamped to [0, 1].

    Cold-start and degenerate pairs fall back to ``model.train_mean``.
    Every test entity must be ranked, otherwise the split was not produced
    by :func:`matrec.dataio.split` and :class:`InvalidStateError` is raised.
    """
    test.require_normalized()
    if len(test) == 0:
        raise InvalidArgumentError("test set is empty")
    for uid in np.unique(test.user_ids):
        if not ranks.has_user(uid):
            raise InvalidStateError(f"test user {int(uid)} is missing from the rank table")
    for iid in np.unique(test.item_ids):
        if not ranks.has_item(iid):
            raise InvalidStateError(f"test item {int(iid)} is missing from the rank table")

    preds, fallback = model.predict_batch(test.user_ids, test.item_ids)
    preds = np.where(fallback, model.train_mean, np.clip(preds, 0.0, 1.0))
    err = mae(preds, test.ratings)
    original = None
    if test.scheme == "global-max" and test.rating_scale:
        original = err * test.rating_scale
    return EvalReport(
        mae=err,
        n_evaluated=len(test),
        n_fallbacks=int(fallback.sum()),
        mae_original=original,
        metadata={"algorithm": getattr(model, "algorithm", type(model).__name__), "dataset": test.name},
    )


class ConstantModel:
    """Predicts the training mean everywhere; the floor every model must beat."""

    algorithm = "constant"

    def __init__(self, train_mean: float):
        self.train_mean = float(train_mean)

    def predict_batch(self, user_ids, item_ids):
        n = len(user_ids)
        return np.full(n, self.train_mean), np.zeros(n, dtype=bool)


@dataclass(frozen=True)
class Prepared:
    train: RatingDataset
    test: RatingDataset
    ranks: RankTable


def prepare(dataset: RatingDataset, test_fraction: float = 0.2, seed: int = 42) -> Prepared:
    """Split, then rank on the training rows only."""
    dataset.require_normalized()
    train, test = dataio.split(dataset, test_fraction, seed)
    return Prepared(train, test, compute_ranks(train))


def fit(algorithm: str, prep: Prepared, config: dict, seed: int, backend: str | None = None):
    """Train one model of ``algorithm`` and wrap it for :func:`evaluate`."""
    train = prep.train
    mean = float(np.mean(train.ratings))
    if algorithm == "matrec":
        hyper = mf.Hyperparams(
            latent_dim=config.get("dim", 20),
            learning_rate=config["learning_rate"],
            epochs=config.get("epochs", 300),
            seed=seed,
            norm_epsilon=config.get("norm_epsilon", 1e-12),
        )
        params, trace = mf.train(train, prep.ranks, hyper, backend=backend)
        model = mf.MatRecModel(params, prep.ranks, mean, hyper.norm_epsilon, backend)
        model.trace = trace
        return model
    if algorithm == "als":
        return baselines.train_als(
            train, config.get("rank", 10), config.get("iterations", 10), config.get("reg", 0.1), seed
        )
    if algorithm == "bpr":
        bpr = baselines.train_bpr(
            train,
            config.get("dim", 20),
            config.get("iterations", 20),
            config.get("learning_rate", 0.05),
            config.get("reg", 0.01),
            seed,
            backend=backend,
        )
        return baselines.CalibratedBpr.fit(bpr, train)
    raise InvalidArgumentError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")


def run(algorithm: str, prep: Prepared, config: dict, seed: int, backend: str | None = None):
    """Train and evaluate; returns ``(model, report)``."""
    model = fit(algorithm, prep, config, seed, backend)
    report = evaluate(model, prep.test, prep.ranks)
    report.metadata.update({"algorithm": algorithm, "seed": seed, **config})
    trace = getattr(model, "trace", None)
    if trace is not None:
        report.metadata["degenerate_steps"] = trace.degenerate_steps
    return model, report


@dataclass
class SweepCurve:
    points: list[tuple[float, EvalReport]]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        etas = [eta for eta, _ in self.points]
        if any(b <= a for a, b in zip(etas, etas[1:])):
            raise InvalidArgumentError("sweep learning rates must be strictly increasing")

    @property
    def etas(self) -> list[float]:
        return [eta for eta, _ in self.points]

    @property
    def maes(self) -> list[float]:
        return [r.mae for _, r in self.points]

    def best(self) -> tuple[float, EvalReport]:
        return min(self.points, key=lambda p: p[1].mae)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("eta,mae,mae_original,n_evaluated,n_fallbacks\n")
        for eta, r in self.points:
            orig = "" if r.mae_original is None else repr(r.mae_original)
            buf.write(f"{eta!r},{r.mae!r},{orig},{r.n_evaluated},{r.n_fallbacks}\n")
        return buf.getvalue()


class SweepPointError(MatRecError):
    def __init__(self, eta: float, cause: Exception):
        self.eta = eta
        super().__init__(f"learning rate {eta!r}: {cause}")


def sweep_threads() -> int:
    try:
        return max(1, int(os.environ.get("MATREC_THREADS", "1")))
    except ValueError:
        return 1


def sweep_learning_rate(
    algorithm: str,
    dataset: RatingDataset | Prepared,
    etas,
    config: dict | None = None,
    seed: int = 42,
    test_fraction: float = 0.2,
    threads: int | None = None,
    backend: str | None = None,
) -> SweepCurve:
    """One train+evaluate run per learning rate, same split and seed for all.

    Points may run on ``threads`` workers (the compiled kernels release the
    GIL); results are ordered by learning rate either way.
    """
    etas = [float(e) for e in etas]
    if not etas:
        raise InvalidArgumentError("need at least one learning rate")
    if any(not (e > 0 and math.isfinite(e)) for e in etas):
        raise InvalidArgumentError("learning rates must be positive")
    if sorted(etas) != etas or len(set(etas)) != len(etas):
        raise InvalidArgumentError("learning rates must be sorted and distinct")
    if algorithm not in ("matrec", "bpr"):
        raise InvalidArgumentError(f"cannot sweep the learning rate of {algorithm!r}")
    prep = dataset if isinstance(dataset, Prepared) else prepare(dataset, test_fraction, seed)
    config = dict(config or {})

    def point(eta):
        try:
            _, report = run(algorithm, prep, {**config, "learning_rate": eta}, seed, backend)
        except MatRecError as exc:
            raise SweepPointError(eta, exc) from exc
        _log.info("%s eta=%g mae=%.6f", algorithm, eta, report.mae)
        return report

    threads = sweep_threads() if threads is None else threads
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(point, etas))
    else:
        reports = [point(eta) for eta in etas]
    meta = {"algorithm": algorithm, "dataset": prep.test.name, "seed": seed, **config}
    return SweepCurve(list(zip(etas, reports)), meta)


def with_metadata(report: EvalReport, **extra) -> EvalReport:
    return replace(report, metadata={**report.metadata, **extra})
