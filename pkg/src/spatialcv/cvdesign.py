"""Cross-validation fold plans for lattice data.

Two designs are provided: square test blocks that tile the lattice exactly,
and spatially clustered folds from k-means on cell centroids.  Either way a
fold splits the cells into three disjoint sets: ``test`` (scored), ``buffer``
(a contiguity halo around the test set, left out of training to weaken
train/test dependence) and ``train`` (everything else).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .lattice import Lattice, contiguity

DESIGN_BLOCKED = "blocked"
DESIGN_CLUSTERED = "clustered"


class InvalidDesignError(Exception):
    """The requested fold design cannot be built on this lattice."""


@dataclass(frozen=True, eq=False)
class Fold:
    """Disjoint (test, buffer, train) index sets covering all cells."""

    test: np.ndarray
    buffer: np.ndarray
    train: np.ndarray

    def __post_init__(self):
        for name in ("test", "buffer", "train"):
            arr = np.asarray(getattr(self, name), dtype=int)
            object.__setattr__(self, name, np.sort(arr))

    @property
    def n(self) -> int:
        return self.test.size + self.buffer.size + self.train.size


@dataclass(frozen=True, eq=False)
class FoldPlan:
    """Ordered folds plus the design that generated them."""

    lattice: Lattice
    folds: tuple[Fold, ...]
    kind: str                      # "blocked" | "clustered"
    params: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.folds)

    @property
    def label(self) -> str:
        if self.kind == DESIGN_BLOCKED:
            return f"blocked_s{self.params['s']}"
        return f"clustered_k{self.params['k']}"


def _validate_fold(test, buffer, train, n):
    sets = {"test": test, "buffer": buffer, "train": train}
    total = 0
    for name, arr in sets.items():
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise ValueError(f"{name} indices out of range for n={n}")
        total += arr.size
    combined = np.concatenate([test, buffer, train])
    if np.unique(combined).size != total:
        raise ValueError("test/buffer/train sets overlap")
    if total != n:
        raise ValueError(f"fold covers {total} of {n} cells")
    if test.size == 0:
        raise ValueError("test set is empty")
    if train.size == 0:
        raise InvalidDesignError("fold has an empty training set")


def _halo(neighbor_csr, test: np.ndarray, halo_order: int, n: int) -> np.ndarray:
    """Cells at graph distance 1..halo_order from the test set."""
    reached = np.zeros(n, dtype=bool)
    reached[test] = True
    frontier = test
    buffer = np.zeros(n, dtype=bool)
    for _ in range(halo_order):
        if frontier.size == 0:
            break
        start = neighbor_csr.indptr[frontier]
        stop = neighbor_csr.indptr[frontier + 1]
        nbrs = np.unique(
            np.concatenate([neighbor_csr.indices[a:b] for a, b in zip(start, stop)])
            if frontier.size
            else np.empty(0, dtype=int)
        )
        fresh = nbrs[~reached[nbrs]]
        reached[fresh] = True
        buffer[fresh] = True
        frontier = fresh
    return np.flatnonzero(buffer)


def _fold_from_test(lattice, neighbor_csr, test, halo_order):
    n = lattice.n
    buffer = _halo(neighbor_csr, test, halo_order, n) if halo_order > 0 else np.empty(0, dtype=int)
    mask = np.ones(n, dtype=bool)
    mask[test] = False
    mask[buffer] = False
    train = np.flatnonzero(mask)
    _validate_fold(np.sort(test), buffer, train, n)
    return Fold(test=test, buffer=buffer, train=train)


def blocked_folds(lattice: Lattice, s: int, halo_order: int = 1, scheme: str = "queen") -> FoldPlan:
    """Tile the lattice with s x s test blocks, each with a contiguity halo.

    ``s`` must divide both lattice dimensions (no partial tiles); the result
    has (rows/s) * (cols/s) folds whose test sets partition the cells.
    """
    if s < 1:
        raise InvalidDesignError(f"block side must be >= 1, got {s}")
    if lattice.rows % s or lattice.cols % s:
        raise InvalidDesignError(
            f"block side {s} does not divide lattice {lattice.rows}x{lattice.cols}"
        )
    if halo_order < 0:
        raise InvalidDesignError(f"halo order must be >= 0, got {halo_order}")
    neighbor = contiguity(lattice, scheme, 1).w if halo_order > 0 else None
    folds = []
    for by in range(lattice.rows // s):
        for bx in range(lattice.cols // s):
            ys = np.arange(by * s, (by + 1) * s)
            xs = np.arange(bx * s, (bx + 1) * s)
            test = (ys[:, None] * lattice.cols + xs[None, :]).ravel()
            folds.append(_fold_from_test(lattice, neighbor, test, halo_order if neighbor is not None else 0))
    return FoldPlan(
        lattice=lattice,
        folds=tuple(folds),
        kind=DESIGN_BLOCKED,
        params={"s": s, "halo_order": halo_order, "scheme": scheme},
    )


def _kmeans_assign(points: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 100):
    """Lloyd's algorithm with k-means++ seeding; None if a cluster empties."""
    n = points.shape[0]
    centers = np.empty((k, 2))
    centers[0] = points[rng.integers(n)]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            # all remaining mass on chosen points; pick any unchosen cell
            unchosen = np.flatnonzero(d2 == 0)
            centers[j] = points[rng.choice(unchosen)]
        else:
            centers[j] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((points - centers[j]) ** 2, axis=1))
    assign = None
    for _ in range(max_iter):
        dist2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_assign = np.argmin(dist2, axis=1)
        counts = np.bincount(new_assign, minlength=k)
        if np.any(counts == 0):
            return None
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            centers[j] = points[assign == j].mean(axis=0)
    return assign


def clustered_folds(
    lattice: Lattice,
    k: int,
    buffer_order: int = 1,
    scheme: str = "queen",
    rng: np.random.Generator | None = None,
) -> FoldPlan:
    """Spatially clustered folds: k-means on centroids, one cluster per fold.

    Re-seeds up to 5 times if a cluster comes out empty; buffers are built the
    same way as for blocked designs.
    """
    if k < 2 or k > lattice.n:
        raise InvalidDesignError(f"cluster count must be in [2, n], got {k}")
    rng = np.random.default_rng(0) if rng is None else rng
    points = lattice.centroids()
    assign = None
    for _ in range(5):
        assign = _kmeans_assign(points, k, rng)
        if assign is not None:
            break
    if assign is None:
        raise InvalidDesignError(f"k-means produced an empty cluster in 5 attempts (k={k})")
    neighbor = contiguity(lattice, scheme, 1).w if buffer_order > 0 else None
    folds = []
    for j in range(k):
        test = np.flatnonzero(assign == j)
        folds.append(_fold_from_test(lattice, neighbor, test, buffer_order if neighbor is not None else 0))
    return FoldPlan(
        lattice=lattice,
        folds=tuple(folds),
        kind=DESIGN_CLUSTERED,
        params={"k": k, "buffer_order": buffer_order, "scheme": scheme},
    )


@dataclass(frozen=True, eq=False)
class FoldViews:
    """A fold together with aligned data: the permutation placing train
    first, then buffer, then test, and the corresponding slices."""

    fold: Fold
    perm: np.ndarray
    y: np.ndarray
    X: np.ndarray | None

    @property
    def y_train(self) -> np.ndarray:
        return self.y[self.fold.train]

    @property
    def y_buffer(self) -> np.ndarray:
        return self.y[self.fold.buffer]

    @property
    def y_test(self) -> np.ndarray:
        return self.y[self.fold.test]

    @property
    def y_permuted(self) -> np.ndarray:
        return self.y[self.perm]

    @property
    def X_train(self) -> np.ndarray | None:
        return None if self.X is None else self.X[self.fold.train]

    def inverse_perm(self) -> np.ndarray:
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.perm.size)
        return inv


def partition_views(fold: Fold, y: np.ndarray, X: np.ndarray | None = None) -> FoldViews:
    """Validate the fold against the data and assemble aligned views."""
    y = np.asarray(y, dtype=float).ravel()
    _validate_fold(fold.test, fold.buffer, fold.train, y.size)
    if X is not None:
        X = np.asarray(X, dtype=float)
        if X.shape[0] != y.size:
            raise ValueError(f"X has {X.shape[0]} rows for {y.size} observations")
    perm = np.concatenate([fold.train, fold.buffer, fold.test])
    return FoldViews(fold=fold, perm=perm, y=y, X=X)


def fold_plan_to_dict(plan: FoldPlan) -> dict:
    """JSON-ready representation (fold index -> three integer arrays)."""
    return {
        "lattice": {"rows": plan.lattice.rows, "cols": plan.lattice.cols},
        "design": {"kind": plan.kind, **plan.params},
        "n_folds": plan.k,
        "folds": [
            {
                "test": fold.test.tolist(),
                "buffer": fold.buffer.tolist(),
                "train": fold.train.tolist(),
            }
            for fold in plan.folds
        ],
    }


def fold_plan_json(plan: FoldPlan, indent: int | None = None) -> str:
    return json.dumps(fold_plan_to_dict(plan), indent=indent)


def ascii_fold_map(plan: FoldPlan, fold_index: int = 0) -> str:
    """Character map of one fold: T test, B buffer, '.' train."""
    fold = plan.folds[fold_index]
    chars = np.full(plan.lattice.n, ".", dtype="<U1")
    chars[fold.buffer] = "B"
    chars[fold.test] = "T"
    rows = [
        " ".join(chars[r * plan.lattice.cols : (r + 1) * plan.lattice.cols])
        for r in range(plan.lattice.rows)
    ]
    return "\n".join(rows)
