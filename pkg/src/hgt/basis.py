"""Covariate and basis matrices for the spatio-temporal mixed effects model.

Two basis families are provided:

* Moran's I eigenvector bases. These are the leading eigenvectors of
  ``G = P W P`` with ``P = I - X (X'X)^{-1} X'``, so every column is orthogonal
  to the fixed effects.
* Thin-plate spline bases over days, assembled into a joint matrix
  ``S = [S_shared | blkdiag(S_regions, S_kind...)]`` for multi-series data.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.spatial import cKDTree

from .data import MultiResponseDataset, ResponseKind


class BasisError(ValueError):
    """Invalid inputs to a basis construction."""


@dataclass
class DesignMatrix:
    """Fixed-effect covariates with column labels."""

    X: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if not self.labels:
            self.labels = tuple(f"x{k}" for k in range(self.X.shape[1]))
        if len(self.labels) != self.X.shape[1]:
            raise BasisError("one label per column is required")

    @property
    def shape(self):
        return self.X.shape


@dataclass
class BasisMatrix:
    """Basis matrix ``S`` (n x r) with its construction descriptor."""

    S: np.ndarray
    kind: str
    labels: tuple = ()
    eigenvalues: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.S.shape


def check_full_rank(X, labels=None, rtol=1e-10):
    """Raise :class:`BasisError` naming the dependent columns if ``X`` is rank deficient."""
    X = np.asarray(X, dtype=float)
    labels = labels or tuple(f"x{k}" for k in range(X.shape[1]))
    if X.shape[0] < X.shape[1]:
        raise BasisError(f"X has {X.shape[0]} rows but {X.shape[1]} columns")
    _, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = rtol * max(diag[0], 1.0) if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    if rank < X.shape[1]:
        dependent = [labels[k] for k in sorted(piv[rank:])]
        raise BasisError(f"X is rank deficient (rank {rank} < {X.shape[1]}); dependent columns: {dependent}")


def _residual_projector(X):
    Q, _ = np.linalg.qr(X)
    return np.eye(X.shape[0]) - Q @ Q.T


def morans_operator(X, W, labels=None):
    """Moran's I operator ``G = P W P`` with ``P`` the projector orthogonal to ``X``.

    Parameters
    ----------
    X : (N, p) array or DesignMatrix
        Full column rank covariates.
    W : (N, N) array
        Symmetric adjacency (or any symmetric weight matrix).

    Returns
    -------
    (N, N) ndarray
        The symmetric matrix ``G``.
    """
    if isinstance(X, DesignMatrix):
        labels, X = X.labels, X.X
    X = np.atleast_2d(np.asarray(X, dtype=float))
    W = np.asarray(W, dtype=float)
    if W.shape != (X.shape[0], X.shape[0]):
        raise BasisError(f"W has shape {W.shape}; expected {(X.shape[0],) * 2}")
    if not np.allclose(W, W.T, rtol=0, atol=1e-12 * max(1.0, np.abs(W).max())):
        raise BasisError("W must be symmetric")
    check_full_rank(X, labels)
    P = _residual_projector(X)
    G = P @ W @ P
    return 0.5 * (G + G.T)


def morans_basis(X, W, r: int, labels=None) -> BasisMatrix:
    """First ``r`` eigenvectors of the Moran operator, ordered by decreasing eigenvalue.

    Ties keep the solver's index order (stable sort), and each column is signed
    so that its first entry of largest magnitude is positive. This makes the
    basis reproducible for a fixed eigensolver.
    """
    G = morans_operator(X, W, labels)
    N = G.shape[0]
    r = int(r)
    if not 1 <= r <= N:
        raise BasisError(f"r must lie in 1..{N}, got {r}")
    values, vectors = np.linalg.eigh(G)
    order = np.argsort(-values, kind="stable")[:r]
    S = vectors[:, order]
    pivot = np.argmax(np.abs(S), axis=0)
    S = S * np.sign(S[pivot, np.arange(r)])
    return BasisMatrix(S=S, kind="moran", labels=tuple(f"moran{k}" for k in range(r)), eigenvalues=values[order])


def knn_adjacency(points, k: int = 10) -> np.ndarray:
    """Symmetrised k-nearest-neighbour adjacency (0/1 weights, zero diagonal)."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    N = len(points)
    if not 1 <= k < N:
        raise BasisError(f"k must lie in 1..{N - 1}, got {k}")
    _, idx = cKDTree(points).query(points, k=k + 1)
    W = np.zeros((N, N))
    rows = np.repeat(np.arange(N), k)
    W[rows, idx[:, 1:].ravel()] = 1.0
    W = np.maximum(W, W.T)
    np.fill_diagonal(W, 0.0)
    return W


def ring_adjacency(N: int) -> np.ndarray:
    """Cycle graph on ``N`` nodes."""
    W = np.zeros((N, N))
    i = np.arange(N)
    W[i, (i + 1) % N] = W[(i + 1) % N, i] = 1.0
    return W


def knot_grid(count: int) -> np.ndarray:
    """``count`` equally spaced knots on [0, 1], endpoints included."""
    if count < 1:
        raise BasisError("knot count must be positive")
    return np.linspace(0.0, 1.0, count) if count > 1 else np.array([0.5])


def thin_plate_value(t, T, c):
    """Thin-plate radial value ``(t/T - c)^2 log|t/T - c|``, taken as 0 at the knot."""
    u = np.asarray(t, dtype=float) / float(T) - np.asarray(c, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(u == 0.0, 0.0, u * u * np.log(np.abs(u)))
    return out if out.ndim else float(out)


def thin_plate_matrix(days, T, knots) -> np.ndarray:
    """Rows of thin-plate values, one per day, one column per knot."""
    return thin_plate_value(np.asarray(days, dtype=float)[:, None], T, np.asarray(knots)[None, :])


@dataclass(frozen=True)
class JointBasisLayout:
    """Column layout of the joint thin-plate basis.

    Columns are ordered as the shared block (``shared_knots`` columns over all
    observations), then one ``region_knots`` block per region for the count
    series, then one ``shared_knots`` block per remaining response kind.
    A layout is fixed from training data and can then produce rows for other
    days, which is how validation and test geometries are handled.
    """

    regions: tuple
    kinds: tuple
    n_days: int
    region_knots: int = 10
    shared_knots: int = 25

    @classmethod
    def from_dataset(cls, dataset: MultiResponseDataset, region_knots=10, shared_knots=25, n_days=None):
        count = dataset.kind == ResponseKind.POISSON
        regions = tuple(dict.fromkeys(str(r) for r in dataset.region[count]))
        kinds = tuple(int(k) for k in (ResponseKind.GAUSSIAN, ResponseKind.BINOMIAL) if np.any(dataset.kind == k))
        return cls(regions, kinds, int(n_days or dataset.n_days), region_knots, shared_knots)

    @property
    def n_columns(self):
        return self.shared_knots + self.region_knots * len(self.regions) + self.shared_knots * len(self.kinds)

    def column_labels(self):
        labels = [f"shared:{m}" for m in range(self.shared_knots)]
        labels += [f"region:{a}:{m}" for a in self.regions for m in range(self.region_knots)]
        labels += [f"{ResponseKind(k).name.lower()}:{m}" for k in self.kinds for m in range(self.shared_knots)]
        return tuple(labels)

    def block_of(self, dataset: MultiResponseDataset) -> np.ndarray:
        """Index of each row's own block: region position, or ``len(regions) + kind position``."""
        region_pos = {a: i for i, a in enumerate(self.regions)}
        kind_pos = {k: len(self.regions) + i for i, k in enumerate(self.kinds)}
        out = np.empty(len(dataset), dtype=np.int64)
        for i, (k, a) in enumerate(zip(dataset.kind, dataset.region)):
            if k == ResponseKind.POISSON:
                if not str(a):
                    raise BasisError(f"row {i}: count observation has no region")
                if str(a) not in region_pos:
                    raise BasisError(f"row {i}: region {a!r} was not seen when the basis was built")
                out[i] = region_pos[str(a)]
            else:
                if int(k) not in kind_pos:
                    raise BasisError(f"row {i}: response kind {int(k)} was not seen when the basis was built")
                out[i] = kind_pos[int(k)]
        return out

    def matrix(self, dataset: MultiResponseDataset) -> BasisMatrix:
        day = dataset.day
        bad = np.flatnonzero((day < 1) | (day > self.n_days))
        if bad.size:
            raise BasisError(f"row {bad[0]}: day {day[bad[0]]} outside 1..{self.n_days}")
        shared = thin_plate_matrix(day, self.n_days, knot_grid(self.shared_knots))
        local_region = thin_plate_matrix(day, self.n_days, knot_grid(self.region_knots))
        block = self.block_of(dataset)
        S = np.zeros((len(dataset), self.n_columns))
        S[:, : self.shared_knots] = shared
        n_reg = len(self.regions)
        base = self.shared_knots
        for i, b in enumerate(block):
            if b < n_reg:
                start = base + b * self.region_knots
                S[i, start : start + self.region_knots] = local_region[i]
            else:
                start = base + n_reg * self.region_knots + (b - n_reg) * self.shared_knots
                S[i, start : start + self.shared_knots] = shared[i]
        return BasisMatrix(S=S, kind="thinplate", labels=self.column_labels(), meta={"layout": self})


def assemble_joint_basis(dataset: MultiResponseDataset, region_knots=10, shared_knots=25) -> BasisMatrix:
    """Joint thin-plate basis for ``dataset`` (layout derived from the same data)."""
    return JointBasisLayout.from_dataset(dataset, region_knots, shared_knots).matrix(dataset)


def export_basis_csv(basis, path, tol=0.0):
    """Write the nonzero entries as ``row,col,value`` (17 significant digits)."""
    S = basis.S if isinstance(basis, BasisMatrix) else np.asarray(basis)
    rows, cols = np.nonzero(np.abs(S) > tol)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("row", "col", "value"))
        for i, j in zip(rows, cols):
            w.writerow((int(i), int(j), f"{S[i, j]:.17g}"))


def block_expand(covariates, kinds, kind_order=(1, 2, 3), intercept=True) -> DesignMatrix:
    """Response-specific regression columns: each kind gets its own copy of the covariates.

    Row ``i`` carries ``[1, x_i]`` in the block of its kind and zeros elsewhere,
    so every response kind has its own coefficients.
    """
    covariates = np.atleast_2d(np.asarray(covariates, dtype=float))
    kinds = np.asarray(kinds)
    base = np.column_stack([np.ones(len(kinds)), covariates]) if intercept else covariates
    q = base.shape[1]
    X = np.zeros((len(kinds), q * len(kind_order)))
    labels = []
    for pos, k in enumerate(kind_order):
        rows = kinds == k
        X[rows, pos * q : (pos + 1) * q] = base[rows]
        name = ResponseKind(k).name.lower()
        labels += ([f"{name}:intercept"] if intercept else []) + [f"{name}:x{m}" for m in range(covariates.shape[1])]
    return DesignMatrix(X, tuple(labels))


@dataclass(frozen=True)
class IndicatorDesign:
    """Per-kind intercepts plus the count-series flags, fixed from training data."""

    kinds: tuple
    flags: tuple

    @classmethod
    def from_dataset(cls, dataset: MultiResponseDataset):
        kinds = tuple(int(k) for k in ResponseKind if np.any(dataset.kind == k))
        flags = tuple(name for name in ("death_flag", "recovery_flag") if np.any(getattr(dataset, name)))
        return cls(kinds, flags)

    def matrix(self, dataset: MultiResponseDataset) -> DesignMatrix:
        cols = [(dataset.kind == k).astype(float) for k in self.kinds]
        cols += [getattr(dataset, name).astype(float) for name in self.flags]
        labels = [f"{ResponseKind(k).name.lower()}:intercept" for k in self.kinds] + list(self.flags)
        return DesignMatrix(np.column_stack(cols), tuple(labels))
