import os
import sys
from pathlib import Path

import numpy as np
import pytest

from matrec import kernels
from matrec.dataio import RatingDataset, normalize_ratings

sys.path.insert(0, str(Path(__file__).parent))

DATA_DIR = Path(__file__).resolve().parents[1] / "data"


def data_path(env: str, *candidates: str) -> Path | None:
    """First existing dataset file: ``$env`` if set, else one of ``data/<candidate>``."""
    if os.environ.get(env):
        return Path(os.environ[env])
    for c in candidates:
        p = DATA_DIR / c
        if p.is_file():
            return p
    return None


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    return request.param


def skewed_dataset(n_users=60, n_items=80, n_ratings=900, seed=0, scheme="per-user-max"):
    """Random interactions with Zipf-like item popularity and integer weights."""
    rng = np.random.default_rng(seed)
    pop = 1.0 / np.arange(1, n_items + 1) ** 1.1
    pop /= pop.sum()
    pairs = set()
    for u in range(n_users):  # every user gets at least one item
        pairs.add((u, int(rng.choice(n_items, p=pop))))
    while len(pairs) < n_ratings:
        pairs.add((int(rng.integers(n_users)), int(rng.choice(n_items, p=pop))))
    pairs = sorted(pairs)
    users = [p[0] for p in pairs]
    items = [p[1] for p in pairs]
    raw = rng.integers(1, 500, size=len(pairs)).astype(float)
    return normalize_ratings(RatingDataset.from_arrays(users, items, raw, name="synthetic"), scheme)


@pytest.fixture
def small_dataset():
    return skewed_dataset()


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance.summary_lines():
        terminalreporter.write_line(line)
