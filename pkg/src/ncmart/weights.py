"""Scalar weights on atomic filtrations: A_p characteristics, weighted
traces and norms, weighted conditional expectations, the factorial
non-doubling weight, dyadic maximal operators and the A_1 factorization
built from the maximal-operator iteration."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .filtration import AtomicFiltration, OpStepFunction, dyadic, from_breakpoint_levels


@dataclass(frozen=True)
class Weight:
    """Strictly positive scalar step function on the finest cells."""

    filtration: AtomicFiltration
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.filtration.n_cells,):
            raise ValueError("weight needs one value per finest cell")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("weight values must be strictly positive and finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, filtration: AtomicFiltration, c: float = 1.0) -> "Weight":
        return cls(filtration, np.full(filtration.n_cells, float(c)))

    def power(self, q: float) -> "Weight":
        return Weight(self.filtration, self.values**q)


def _atom_fsum(vals: np.ndarray, starts: np.ndarray, n_cells: int) -> np.ndarray:
    """Compensated per-atom sums (exact via math.fsum)."""
    ends = np.append(starts[1:], n_cells)
    lst = vals.tolist()
    return np.array([math.fsum(lst[s:e]) for s, e in zip(starts.tolist(), ends.tolist())])


def _atom_averages(w: Weight, vals: np.ndarray, level: int) -> np.ndarray:
    """Per-atom averages (1/mu(Q)) int_Q vals dmu with compensated sums."""
    fl = w.filtration
    starts = fl.level_starts[level]
    num = _atom_fsum(vals * fl.cell_lengths, starts, fl.n_cells)
    den = fl.atom_measures(level)
    return num / den


def ap_char(w: Weight, p: float) -> float:
    """[w]_{A_p}: max over atoms of all levels of avg(w) * avg(w^{1/(1-p)})^{p-1}."""
    if not p > 1:
        raise ValueError("ap_char needs p > 1; use a1_char for p = 1")
    dual_vals = w.values ** (1.0 / (1.0 - p))
    best = 0.0
    for level in range(w.filtration.depth + 1):
        aw = _atom_averages(w, w.values, level)
        av = _atom_averages(w, dual_vals, level)
        best = max(best, float(np.max(aw * av ** (p - 1.0))))
    return best


def a1_char(w: Weight) -> float:
    """[w]_{A_1}: max over atoms of avg(w) / essinf(w)."""
    fl = w.filtration
    best = 0.0
    for level in range(fl.depth + 1):
        aw = _atom_averages(w, w.values, level)
        inf = np.minimum.reduceat(w.values, fl.level_starts[level])
        best = max(best, float(np.max(aw / inf)))
    return best


def dual_weight(w: Weight, p: float) -> Weight:
    """v = w^{1/(1-p)}, the A_{p'} dual weight."""
    if not p > 1:
        raise ValueError("dual weight needs p > 1")
    return w.power(1.0 / (1.0 - p))


def weighted_trace(f: OpStepFunction, w: Weight) -> float:
    """tau^w(f) = sum over cells of mu * w * tr(f)."""
    tr = np.trace(f.values, axis1=1, axis2=2).real
    fl = f.filtration
    return math.fsum((tr * fl.cell_lengths * w.values).tolist())


def weighted_lp_norm(f: OpStepFunction, p: float, w: Weight) -> float:
    """(tau^w(|f|^p))^{1/p} = (sum mu * tr|f|^p * w)^{1/p}."""
    if not 1 <= p < math.inf:
        raise ValueError("weighted L_p norm needs p in [1, inf)")
    lam = np.linalg.eigvalsh(f.values)
    tr_pow = np.sum(np.abs(lam) ** p, axis=1)
    fl = f.filtration
    total = math.fsum((tr_pow * fl.cell_lengths * w.values).tolist())
    return float(total ** (1.0 / p))


def weighted_cond_exp(f: OpStepFunction, level: int, w: Weight) -> OpStepFunction:
    """E_n^w(f): per level-n atom, the w-weighted average (1/w(Q)) int_Q f w dmu.

    Equals E_n(f w) E_n(w)^{-1}; w is scalar so the division is cellwise.
    """
    fl = f.filtration
    vals = fl.level_average(f.values, level, weights=fl.cell_lengths * w.values)
    return OpStepFunction(fl, vals)


def nonhomog_weight(N: int):
    """The factorial chain weight on [0, 1]: breakpoints a_n = 2^{-n}/n!,
    weight n! on (a_{n+1}, a_n], merged below a_N into a core of value N!.

    Returns (filtration, Weight).  The weight is A_1 with characteristic <= 2
    but w^alpha is non-integrable for every alpha > 1.
    """
    if N < 1:
        raise ValueError("truncation depth must be >= 1")
    a = [2.0**-n / math.factorial(n) for n in range(N + 1)]
    if not all(x > 0 for x in a) or any(a[i + 1] >= a[i] for i in range(N)):
        raise ValueError("truncation too deep: breakpoints underflow")
    # ascending: 0, a_N, ..., a_1, a_0 = 1
    levels = [np.array([0.0, 1.0])]
    for k in range(1, N + 1):
        levels.append(np.array([0.0] + a[1 : k + 1][::-1] + [1.0]))
    fl = from_breakpoint_levels(levels)
    # cells ascending: core [0, a_N), then (a_{n+1}, a_n] for n = N-1 .. 0
    vals = [float(math.factorial(N))] + [float(math.factorial(n)) for n in range(N - 1, -1, -1)]
    return fl, Weight(fl, np.array(vals))


def nonhomog_divergence_probe(alpha: float, N: int) -> np.ndarray:
    """Partial sums of sum_n (n!)^alpha (2n+1) / (2^{n+1} (n+1)!).

    Diverges for every alpha > 1, which is why the factorial weight admits no
    reverse Holder inequality.  Computed in log space.
    """
    n = np.arange(N + 1, dtype=np.float64)
    log_terms = (
        alpha * np.array([math.lgamma(k + 1) for k in range(N + 1)])
        + np.log(2 * n + 1)
        - (n + 1) * math.log(2.0)
        - np.array([math.lgamma(k + 2) for k in range(N + 1)])
    )
    return np.cumsum(np.exp(log_terms))


def dyadic_maximal(f_vals: np.ndarray, fl: AtomicFiltration, u: Weight | None = None) -> np.ndarray:
    """M_u f: pointwise max over all atoms containing the point of the
    u-weighted average of f (u = 1 if absent)."""
    f_vals = np.asarray(f_vals, dtype=np.float64)
    if np.any(f_vals < 0):
        raise ValueError("dyadic maximal operator expects nonnegative input")
    weights = fl.cell_lengths if u is None else fl.cell_lengths * u.values
    out = np.full(fl.n_cells, -np.inf)
    for level in range(fl.depth + 1):
        avg = fl.level_average(f_vals, level, weights=weights)
        np.maximum(out, avg, out=out)
    return out


def _lp_norm_scalar(vals: np.ndarray, mu: np.ndarray, p: float) -> float:
    return float(math.fsum((np.abs(vals) ** p * mu).tolist()) ** (1.0 / p))


@dataclass(frozen=True)
class FactorizationResult:
    """A_1 x A_1 factorization w = w1 * w2^{1-p} with the maximal-operator
    pointwise bounds M(w1) <= (2t)^{p-1} w1 and M(w2) <= 2t w2."""

    w1: Weight
    w2: Weight
    p: float
    iterations: int
    t_norm: float
    converged: bool
    tail_rel: float
    identity_rel_err: float
    m_ratio_w1: float  # max over cells of M(w1) / ((2t)^{p-1} w1)
    m_ratio_w2: float  # max over cells of M(w2) / (2t w2)


def _rdf_operator(w: Weight, p: float):
    fl = w.filtration
    wv = w.values
    w_p = wv ** (1.0 / p)

    def T(f: np.ndarray) -> np.ndarray:
        first = (dyadic_maximal(f ** (p - 1.0) * w_p, fl) / w_p) ** (1.0 / (p - 1.0))
        second = w_p * dyadic_maximal(f / w_p, fl)
        return first + second

    return T


def estimate_t_norm(w: Weight, p: float, trials: int = 4, iters: int = 4) -> float:
    """Empirical L_p -> L_p bound for the factorization operator via
    power-iteration-style sampling over seeded nonnegative inputs."""
    fl = w.filtration
    mu = fl.cell_lengths
    T = _rdf_operator(w, p)
    rng = np.random.Generator(np.random.PCG64(20240707))
    best = 0.0
    for _ in range(trials):
        f = np.exp(rng.normal(size=fl.n_cells))
        for _ in range(iters):
            nf = _lp_norm_scalar(f, mu, p)
            tf = T(f / nf)
            ratio = _lp_norm_scalar(tf, mu, p)
            best = max(best, ratio)
            f = tf
    return best


def rdf_factorize(
    w: Weight,
    p: float,
    n_iter: int = 48,
    psi: np.ndarray | None = None,
    t_norm: float | None = None,
) -> FactorizationResult:
    """Factor w = w1 * w2^{1-p} through phi = sum_n (2||T||)^{-n} T^n(psi).

    Requires p >= 2 (for p < 2 factor the dual weight and swap the roles,
    w = v2 * v1^{1-p}).  ``t_norm`` defaults to the empirical estimate; the
    product identity is exact regardless, only the A_1 bounds depend on it.
    """
    if p < 2:
        raise ValueError("factorization iteration needs p >= 2; factor the dual weight for p < 2")
    fl = w.filtration
    mu = fl.cell_lengths
    if psi is None:
        psi = np.ones(fl.n_cells)
    psi = np.asarray(psi, dtype=np.float64)
    if np.any(psi < 0) or not np.any(psi > 0):
        raise ValueError("seed must be nonnegative and not identically zero")
    psi = psi / _lp_norm_scalar(psi, mu, p)
    t = estimate_t_norm(w, p) if t_norm is None else float(t_norm)
    T = _rdf_operator(w, p)
    phi = np.zeros(fl.n_cells)
    term = psi.copy()
    tail_rel = math.inf
    its = 0
    for n in range(1, n_iter + 1):
        term = T(term) / (2.0 * t)
        phi = phi + term
        its = n
        tail_rel = float(np.max(term) / max(np.max(phi), 1e-300))
        if tail_rel < 1e-14:
            break
    converged = tail_rel < 1e-10
    w_p = w.values ** (1.0 / p)
    w1 = Weight(fl, w_p * phi ** (p - 1.0))
    w2 = Weight(fl, phi / w_p)
    recon = w1.values * w2.values ** (1.0 - p)
    identity_rel_err = float(np.max(np.abs(recon - w.values) / w.values))
    m1 = dyadic_maximal(w1.values, fl)
    m2 = dyadic_maximal(w2.values, fl)
    r1 = float(np.max(m1 / ((2.0 * t) ** (p - 1.0) * w1.values)))
    r2 = float(np.max(m2 / (2.0 * t * w2.values)))
    return FactorizationResult(
        w1, w2, p, its, t, converged, tail_rel, identity_rel_err, r1, r2
    )


# -- CSV interchange -------------------------------------------------------

def weight_to_csv(w: Weight, path) -> None:
    """One row per finest atom: (left endpoint, length, value)."""
    fl = w.filtration
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["left", "length", "value"])
        for left, length, val in zip(fl.cell_bounds[:-1], fl.cell_lengths, w.values):
            out.writerow([f"{left:.17g}", f"{length:.17g}", f"{val:.17g}"])


def weight_from_csv(path, fl: AtomicFiltration | None = None) -> Weight:
    """Load a weight; without an explicit filtration the atoms must form a
    uniform dyadic grid (2^J equal cells)."""
    lefts, lengths, vals = [], [], []
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if [h.strip() for h in header] != ["left", "length", "value"]:
            raise ValueError("unexpected weight CSV header")
        for row in rd:
            lefts.append(float(row[0]))
            lengths.append(float(row[1]))
            vals.append(float(row[2]))
    lefts = np.asarray(lefts)
    lengths = np.asarray(lengths)
    vals = np.asarray(vals)
    if fl is None:
        n = lefts.size
        J = int(round(math.log2(n)))
        if 2**J != n or not np.allclose(lengths, lengths[0], rtol=1e-12):
            raise ValueError("cannot infer a filtration: atoms are not a uniform dyadic grid")
        fl = dyadic(J, (lefts[0], lefts[-1] + lengths[-1]))
    if fl.n_cells != lefts.size or not np.allclose(fl.cell_bounds[:-1], lefts, rtol=0, atol=1e-12):
        raise ValueError("CSV atoms do not match the filtration cells")
    return Weight(fl, vals)
