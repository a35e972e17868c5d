"""Atomic filtrations on an interval, matrix-valued step functions,
conditional expectations, martingales and martingale transforms.

A filtration is a nested list of interval partitions of the base window; the
finest level is the cell grid every step function lives on.  Conditional
expectation at level n replaces a function by its per-atom average.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import matcore


@dataclass(frozen=True)
class AtomicFiltration:
    """Nested interval partitions; atoms at level n are contiguous cell runs.

    cell_bounds : (n_cells+1,) ascending breakpoints of the finest grid.
    level_starts: per level, ascending cell indices where the atoms start
                  (always beginning with 0).  The last level must split every
                  cell into its own atom.
    """

    cell_bounds: np.ndarray
    level_starts: tuple = field(repr=False)

    def __post_init__(self):
        bounds = np.asarray(self.cell_bounds, dtype=np.float64)
        if bounds.ndim != 1 or bounds.size < 2:
            raise ValueError("cell_bounds must be a 1-d array with >= 2 entries")
        if not np.all(np.diff(bounds) > 0):
            raise ValueError("cells must have strictly positive measure")
        object.__setattr__(self, "cell_bounds", bounds)
        starts = tuple(np.asarray(s, dtype=np.int64) for s in self.level_starts)
        n = bounds.size - 1
        prev = None
        for lvl, s in enumerate(starts):
            if s[0] != 0 or np.any(np.diff(s) <= 0) or s[-1] >= n:
                raise ValueError(f"invalid atom starts at level {lvl}")
            if prev is not None and not np.all(np.isin(prev, s)):
                raise ValueError(f"level {lvl} does not refine level {lvl - 1}")
            prev = s
        if starts[-1].size != n:
            raise ValueError("finest level must resolve every cell")
        object.__setattr__(self, "level_starts", starts)

    # -- geometry ---------------------------------------------------------
    @property
    def n_cells(self) -> int:
        return self.cell_bounds.size - 1

    @property
    def depth(self) -> int:
        return len(self.level_starts) - 1

    @property
    def base(self) -> tuple:
        return (float(self.cell_bounds[0]), float(self.cell_bounds[-1]))

    @property
    def cell_lengths(self) -> np.ndarray:
        return np.diff(self.cell_bounds)

    @property
    def cell_centers(self) -> np.ndarray:
        return 0.5 * (self.cell_bounds[:-1] + self.cell_bounds[1:])

    def n_atoms(self, level: int) -> int:
        return self.level_starts[level].size

    def atom_counts(self, level: int) -> np.ndarray:
        s = self.level_starts[level]
        return np.diff(np.append(s, self.n_cells))

    def atom_measures(self, level: int) -> np.ndarray:
        return np.add.reduceat(self.cell_lengths, self.level_starts[level])

    def atom_intervals(self, level: int) -> np.ndarray:
        """(n_atoms, 2) array of [left, right) atom endpoints."""
        s = self.level_starts[level]
        ends = np.append(s[1:], self.n_cells)
        return np.column_stack([self.cell_bounds[s], self.cell_bounds[ends]])

    def labels(self, level: int) -> np.ndarray:
        return np.repeat(np.arange(self.n_atoms(level)), self.atom_counts(level))

    def _check_level(self, level: int) -> None:
        if not 0 <= level <= self.depth:
            raise ValueError(f"level {level} out of range [0, {self.depth}]")

    # -- reductions --------------------------------------------------------
    def atom_sums(self, values: np.ndarray, level: int) -> np.ndarray:
        """Per-atom sums of cellwise quantities (leading axis = cells)."""
        self._check_level(level)
        return np.add.reduceat(values, self.level_starts[level], axis=0)

    def level_average(self, values: np.ndarray, level: int, weights=None) -> np.ndarray:
        """Weighted per-atom average broadcast back onto the cells.

        ``weights`` defaults to the cell measures, giving the conditional
        expectation with respect to the base measure.
        """
        self._check_level(level)
        w = self.cell_lengths if weights is None else np.asarray(weights, dtype=np.float64)
        extra = (1,) * (values.ndim - 1)
        num = self.atom_sums(values * w.reshape((-1,) + extra), level)
        den = self.atom_sums(w, level).reshape((-1,) + extra)
        return np.repeat(num / den, self.atom_counts(level), axis=0)

    def measurable_at(self, values: np.ndarray, level: int, tol: float = 1e-10) -> bool:
        """Whether a cellwise quantity is constant on each level-n atom."""
        avg = self.level_average(values, level)
        scale = max(1.0, float(np.abs(values).max()) if values.size else 0.0)
        return bool(np.abs(values - avg).max() <= tol * scale)


def dyadic(J: int, base: Sequence[float] = (0.0, 1.0), stride: int = 1) -> AtomicFiltration:
    """Dyadic filtration of depth J: level n has (2**stride)**n equal atoms.

    ``stride=2`` gives the even-scale (quaternary) lattice.
    """
    if J < 0:
        raise ValueError("depth must be >= 0")
    lo, hi = float(base[0]), float(base[1])
    if not hi > lo:
        raise ValueError("base interval must have positive length")
    b = 2**stride
    n = b**J
    bounds = lo + (hi - lo) * np.arange(n + 1) / n
    starts = tuple(np.arange(0, n, b ** (J - k), dtype=np.int64) for k in range(J + 1))
    return AtomicFiltration(bounds, starts)


def quaternary(K: int, base: Sequence[float] = (0.0, 1.0)) -> AtomicFiltration:
    return dyadic(K, base, stride=2)


def from_breakpoint_levels(levels: Sequence[np.ndarray]) -> AtomicFiltration:
    """Build a filtration from explicit nested breakpoint lists.

    Each entry must contain both base endpoints; successive entries must be
    supersets (refinements).  Used for non-dyadic atomic filtrations.
    """
    bps = [np.unique(np.asarray(l, dtype=np.float64)) for l in levels]
    finest = bps[-1]
    starts = []
    for bp in bps:
        idx = np.searchsorted(finest, bp[:-1])
        if not np.allclose(finest[idx], bp[:-1], rtol=0, atol=1e-12):
            raise ValueError("levels are not nested")
        starts.append(idx.astype(np.int64))
    return AtomicFiltration(finest, tuple(starts))


@dataclass(frozen=True)
class OpStepFunction:
    """Matrix-valued step function on the finest cells of a filtration."""

    filtration: AtomicFiltration
    values: np.ndarray  # (n_cells, d, d) complex

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.ndim != 3 or v.shape[1] != v.shape[2]:
            raise ValueError(f"values must be (n_cells, d, d), got {v.shape}")
        if v.shape[0] != self.filtration.n_cells:
            raise ValueError("value count does not match the cell count")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @classmethod
    def constant(cls, filtration: AtomicFiltration, matrix: np.ndarray) -> "OpStepFunction":
        m = np.asarray(matrix, dtype=np.complex128)
        return cls(filtration, np.broadcast_to(m, (filtration.n_cells,) + m.shape).copy())

    @classmethod
    def from_scalar(cls, filtration: AtomicFiltration, values: np.ndarray) -> "OpStepFunction":
        v = np.asarray(values, dtype=np.complex128).reshape(-1, 1, 1)
        return cls(filtration, v)

    @property
    def scalar_values(self) -> np.ndarray:
        if self.dim != 1:
            raise ValueError("not a scalar step function")
        return self.values[:, 0, 0].real.copy()

    def hermitized(self) -> "OpStepFunction":
        return OpStepFunction(self.filtration, matcore.hermitize(self.values))

    def is_positive(self, tol: float = matcore.ORDER_TOL) -> bool:
        w = np.linalg.eigvalsh(matcore.hermitize(self.values))
        scale = max(float(np.abs(w).max()), 1e-30)
        return bool(w.min() >= -tol * scale)

    def op_norms(self) -> np.ndarray:
        """Per-cell operator norm."""
        return np.abs(np.linalg.eigvalsh(matcore.hermitize(self.values))).max(axis=1)

    def _binop(self, other, sign):
        if isinstance(other, OpStepFunction):
            if other.filtration is not self.filtration and not np.array_equal(
                other.filtration.cell_bounds, self.filtration.cell_bounds
            ):
                raise ValueError("step functions live on different grids")
            return OpStepFunction(self.filtration, self.values + sign * other.values)
        return NotImplemented

    def __add__(self, other):
        return self._binop(other, 1.0)

    def __sub__(self, other):
        return self._binop(other, -1.0)

    def __mul__(self, scalar):
        return OpStepFunction(self.filtration, self.values * scalar)

    __rmul__ = __mul__


def cond_exp(f: OpStepFunction, level: int) -> OpStepFunction:
    """Conditional expectation onto level-n atoms (base measure)."""
    return OpStepFunction(f.filtration, f.filtration.level_average(f.values, level))


@dataclass(frozen=True)
class MartingaleSeq:
    """Terms x_0 .. x_J with x_n = E_n(x_J); differences dx_0 = x_0."""

    terms: tuple

    def __post_init__(self):
        if not self.terms:
            raise ValueError("a martingale needs at least one term")
        object.__setattr__(self, "terms", tuple(self.terms))

    @property
    def filtration(self) -> AtomicFiltration:
        return self.terms[0].filtration

    @property
    def depth(self) -> int:
        return len(self.terms) - 1

    @property
    def differences(self) -> tuple:
        out = [self.terms[0]]
        for n in range(1, len(self.terms)):
            out.append(self.terms[n] - self.terms[n - 1])
        return tuple(out)

    def max_defect(self) -> float:
        """Largest violation of E_n(x_{n+1}) = x_n, for the invariant check."""
        defect = 0.0
        for n in range(self.depth):
            delta = cond_exp(self.terms[n + 1], n).values - self.terms[n].values
            defect = max(defect, float(np.abs(delta).max()))
        return defect


def martingale(f: OpStepFunction) -> MartingaleSeq:
    """The martingale (E_n f) for n = 0..J; the final term is f itself."""
    J = f.filtration.depth
    terms = [cond_exp(f, n) for n in range(J)]
    terms.append(f)
    return MartingaleSeq(tuple(terms))


def transform(m: MartingaleSeq, eps: Sequence[float]) -> MartingaleSeq:
    """Martingale transform dy_n = eps_n dx_n with |eps_n| <= 1."""
    eps = np.asarray(eps, dtype=np.float64)
    if eps.size != len(m.terms):
        raise ValueError(f"need {len(m.terms)} multipliers, got {eps.size}")
    if np.abs(eps).max() > 1.0 + 1e-15:
        raise ValueError("transform multipliers must lie in [-1, 1]")
    diffs = m.differences
    acc = diffs[0] * eps[0]
    terms = [acc]
    for n in range(1, len(diffs)):
        acc = acc + diffs[n] * eps[n]
        terms.append(acc)
    return MartingaleSeq(tuple(terms))
