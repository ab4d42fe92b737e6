"""Regular lattice geometry, contiguity weight matrices and centroid distances.

Cells of an ``rows x cols`` grid are indexed row-major (index i sits at
centroid ``(i % cols, i // cols)`` with unit spacing).  Contiguity weights
follow the usual rook (edge-sharing) and queen (edge-or-corner-sharing)
conventions, optionally extended to order-k reachability in the 1-step graph
and row-standardized so each non-isolated row sums to one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

SCHEMES = ("rook", "queen")

_ROOK_OFFSETS = ((1, 0), (-1, 0), (0, 1), (0, -1))
_QUEEN_OFFSETS = _ROOK_OFFSETS + ((1, 1), (1, -1), (-1, 1), (-1, -1))


@dataclass(frozen=True)
class Lattice:
    """A rows x cols regular grid with row-major cell indexing."""

    rows: int
    cols: int

    @property
    def n(self) -> int:
        return self.rows * self.cols

    def centroid(self, i: int) -> tuple[float, float]:
        """(x, y) centroid of cell i, unit spacing."""
        return (float(i % self.cols), float(i // self.cols))

    def centroids(self) -> np.ndarray:
        """(n, 2) array of centroids in index order."""
        idx = np.arange(self.n)
        return np.column_stack((idx % self.cols, idx // self.cols)).astype(float)

    def index_at(self, x: int, y: int) -> int:
        return y * self.cols + x


@dataclass(frozen=True, eq=False)
class AdjacencyMatrix:
    """Sparse nonnegative spatial weights with zero diagonal.

    ``w`` holds the weights (CSR).  ``standardized`` marks row-standardized
    weights; unstandardized entries are 0/1 and symmetric.
    """

    w: sp.csr_matrix
    scheme: str
    order: int
    standardized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "_cache", {})

    @property
    def n(self) -> int:
        return self.w.shape[0]

    def toarray(self) -> np.ndarray:
        return self.w.toarray()

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.w.sum(axis=1)).ravel()

    def neighbor_counts(self) -> np.ndarray:
        return np.diff(self.w.indptr)

    def eigenvalues(self) -> np.ndarray:
        """Real eigenvalue spectrum of the weights matrix (cached).

        For unstandardized (symmetric) weights this is the ordinary symmetric
        spectrum.  Row-standardized weights D^-1 W are similar to the
        symmetric D^-1/2 W D^-1/2, so their spectrum is real as well; rows
        with no neighbors contribute zero eigenvalues.
        """
        cache = self._cache
        if "eig" not in cache:
            cache["eig"] = _weights_spectrum(self)
        return cache["eig"]

    def rho_interval(self) -> tuple[float, float]:
        """Open interval of valid autoregressive coefficients.

        (0, 1) for row-standardized weights; (1/w_min, 1/w_max) otherwise,
        with w_min/w_max the extreme eigenvalues.
        """
        if self.standardized:
            return (0.0, 1.0)
        eig = self.eigenvalues()
        lo, hi = float(eig.min()), float(eig.max())
        if lo >= 0.0 or hi <= 0.0:
            # no-neighbor degenerate case (1x1 lattice): any rho is valid
            return (-1.0, 1.0)
        return (1.0 / lo, 1.0 / hi)


def _weights_spectrum(adj: AdjacencyMatrix) -> np.ndarray:
    dense = adj.w.toarray()
    if not adj.standardized:
        return np.sort(np.linalg.eigvalsh(dense))
    # D^-1 W is similar to the symmetric D^-1/2 W D^-1/2, so the spectrum is
    # real; tiny imaginary parts from the general solver are discarded.
    return np.sort(np.linalg.eigvals(dense).real)


def build_grid(rows: int, cols: int) -> Lattice:
    """Construct a regular lattice; dimensions must be positive."""
    if rows < 1 or cols < 1:
        raise ValueError(f"lattice dimensions must be positive, got {rows}x{cols}")
    return Lattice(int(rows), int(cols))


def _one_step_adjacency(lattice: Lattice, scheme: str) -> sp.csr_matrix:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown contiguity scheme {scheme!r}")
    offsets = _ROOK_OFFSETS if scheme == "rook" else _QUEEN_OFFSETS
    r, c = lattice.rows, lattice.cols
    idx = np.arange(lattice.n)
    x, y = idx % c, idx // c
    rows_ = []
    cols_ = []
    for dx, dy in offsets:
        ok = (x + dx >= 0) & (x + dx < c) & (y + dy >= 0) & (y + dy < r)
        rows_.append(idx[ok])
        cols_.append((y[ok] + dy) * c + (x[ok] + dx))
    i = np.concatenate(rows_)
    j = np.concatenate(cols_)
    w = sp.csr_matrix((np.ones(len(i)), (i, j)), shape=(lattice.n, lattice.n))
    w.sum_duplicates()
    return w


def contiguity(lattice: Lattice, scheme: str = "rook", order: int = 1) -> AdjacencyMatrix:
    """0/1 adjacency: cells reachable in at most ``order`` one-step moves.

    Order-k neighborhoods are graph-step reachability in the scheme's 1-step
    graph (not Chebyshev distance), excluding the cell itself.
    """
    if order < 1:
        raise ValueError(f"contiguity order must be >= 1, got {order}")
    step = _one_step_adjacency(lattice, scheme)
    reach = step.copy()
    frontier = step
    for _ in range(order - 1):
        frontier = frontier @ step
        reach = reach + frontier
    reach = (reach > 0).astype(float).tocsr()
    reach.setdiag(0.0)
    reach.eliminate_zeros()
    return AdjacencyMatrix(w=reach, scheme=scheme, order=order, standardized=False)


def row_standardize(adj: AdjacencyMatrix) -> AdjacencyMatrix:
    """Divide each nonzero row by its row sum; zero rows stay zero.

    Idempotent: standardizing already-standardized weights is a no-op.
    """
    w = adj.w.tocsr(copy=True)
    rs = np.asarray(w.sum(axis=1)).ravel()
    inv = np.where(rs > 0, 1.0 / np.where(rs > 0, rs, 1.0), 0.0)
    w = sp.diags(inv) @ w
    return AdjacencyMatrix(w=w.tocsr(), scheme=adj.scheme, order=adj.order, standardized=True)


def distances(lattice: Lattice) -> np.ndarray:
    """n x n Euclidean distance matrix between cell centroids."""
    pts = lattice.centroids()
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1))


def edge_list_lines(adj: AdjacencyMatrix):
    """Yield ``"i j weight"`` lines for every stored edge (debug export)."""
    coo = adj.w.tocoo()
    for i, j, v in zip(coo.row, coo.col, coo.data):
        yield f"{i} {j} {v:.12g}"


def write_edge_list(adj: AdjacencyMatrix, path) -> None:
    with open(path, "w") as fh:
        for line in edge_list_lines(adj):
            fh.write(line + "\n")
