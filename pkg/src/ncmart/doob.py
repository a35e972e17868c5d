"""Maximal ell_infty norms of positive sequences with two-sided certificates,
the weighted Doob and dual-Doob ratios, and Cuculescu's weak-type projections.

The ell_infty norm of a positive sequence decouples across the finest cells
(the weight is scalar and the trace integrates cellwise), so the majorant is
found by an independent small-matrix solve per cell; those solves are the hot
kernels in :mod:`ncmart._kernels`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import matcore
from ._kernels import majorant_solve_cells_k
from .filtration import AtomicFiltration, MartingaleSeq, OpStepFunction, cond_exp, martingale
from .weights import Weight, a1_char, ap_char, dual_weight, weighted_lp_norm, weighted_trace

DYKSTRA_CAP = 10_000       # Dykstra cycle cap per cell
GD_MAX_ITER = 400          # projected-gradient outer iterations
MOVE_TOL = 1e-11           # relative per-cycle movement/feasibility target
KERNEL_TOL = 1e-6          # relative threshold for "tight" constraints


@dataclass(frozen=True)
class PositiveSeq:
    """A finite sequence of pointwise-PSD step functions on one filtration."""

    terms: tuple

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ValueError("empty sequence")
        fl = terms[0].filtration
        d = terms[0].dim
        for t in terms[1:]:
            if t.filtration.n_cells != fl.n_cells or t.dim != d:
                raise ValueError("sequence terms live on different grids")
        object.__setattr__(self, "terms", terms)

    @property
    def filtration(self) -> AtomicFiltration:
        return self.terms[0].filtration

    @property
    def dim(self) -> int:
        return self.terms[0].dim

    def stacked(self) -> np.ndarray:
        """(n_cells, K, d, d) stack of the terms."""
        return np.stack([t.values for t in self.terms], axis=1)

    def check_positive(self, tol: float = matcore.ORDER_TOL) -> bool:
        return all(t.is_positive(tol) for t in self.terms)


def dual_doob_apply(a: PositiveSeq) -> OpStepFunction:
    """sum_n E_n(a_n); terms are indexed by their level."""
    fl = a.filtration
    if len(a.terms) > fl.depth + 1:
        raise ValueError("more terms than filtration levels")
    out = cond_exp(a.terms[0], 0)
    for n, t in enumerate(a.terms[1:], start=1):
        out = out + cond_exp(t, n)
    return out


def dual_doob_ratio(a: PositiveSeq, p: float, w: Weight) -> float:
    """||sum E_n(a_n)||_{L_p^w} / ||sum a_n||_{L_p^w}."""
    total = a.terms[0]
    for t in a.terms[1:]:
        total = total + t
    denom = weighted_lp_norm(total, p, w)
    if denom == 0:
        raise ValueError("ratio undefined for the zero sequence")
    return weighted_lp_norm(dual_doob_apply(a), p, w) / denom


@dataclass(frozen=True)
class MajorantCertificate:
    """Sandwich for the positive ell_infty norm: a feasible majorant above,
    a feasible dual sequence below."""

    upper_a: OpStepFunction
    upper_value: float
    dual_y: tuple | None
    lower_value: float
    cap_reached: bool

    @property
    def gap(self) -> float:
        if self.upper_value == 0:
            return 0.0
        return (self.upper_value - self.lower_value) / self.upper_value


def linf_norm_upper(
    x: PositiveSeq,
    p: float,
    w: Weight,
    opt_tol: float = 1e-11,
    max_iter: int = GD_MAX_ITER,
) -> MajorantCertificate:
    """Feasible majorant a >= x_n with small ||a||_{L_p^w}.

    Scalar sequences (d = 1) take the exact fast path a = pointwise max; for
    d >= 2 each cell runs a projected-gradient descent on tr(a^p) with a
    Dykstra projection onto the intersection of the shifted PSD cones.
    Feasibility of the result is re-verified (and nudged) post hoc inside the
    kernel.
    """
    if not 1 < p < math.inf:
        raise ValueError("the maximal norm solver needs p in (1, inf)")
    fl = x.filtration
    if x.dim == 1:
        vals = np.stack([t.values[:, 0, 0].real for t in x.terms], axis=1)
        a_vals = vals.max(axis=1)
        a = OpStepFunction.from_scalar(fl, a_vals)
        return MajorantCertificate(a, weighted_lp_norm(a, p, w), None, 0.0, False)
    xs_cells = x.stacked()
    a_cells, _, _, capped = majorant_solve_cells_k(
        xs_cells, float(p), max_iter, DYKSTRA_CAP, MOVE_TOL, opt_tol
    )
    a = OpStepFunction(fl, matcore.hermitize(a_cells))
    return MajorantCertificate(a, weighted_lp_norm(a, p, w), None, 0.0, bool(capped.any()))


def _tight_dual_sequence(xs: np.ndarray, a_cells: np.ndarray, p: float) -> np.ndarray:
    """Per cell, split a^{p-1} across the near-kernels of (a - x_n).

    Greedy orthogonal assignment: each direction of the kernel of a - x_n not
    yet claimed by an earlier term goes to term n.  On commuting instances
    this reproduces the Hoelder equality case exactly.
    """
    n_cells, K, d, _ = xs.shape
    ys = np.zeros_like(xs)
    for c in range(n_cells):
        a = a_cells[c]
        wa, va = np.linalg.eigh(a)
        scale = max(float(wa[-1]), 1e-300)
        r = (va * np.maximum(wa, 0.0).astype(np.complex128) ** (p - 1.0)) @ va.conj().T
        assigned: list[np.ndarray] = []
        for n in range(K):
            z = a - xs[c, n]
            wz, vz = np.linalg.eigh((z + z.conj().T) * 0.5)
            cols = []
            for j in range(d):
                if wz[j] > KERNEL_TOL * scale:
                    continue
                u = vz[:, j].copy()
                for v in assigned:
                    u -= v * (v.conj() @ u)
                nu = np.linalg.norm(u)
                if nu > 0.5:
                    u /= nu
                    assigned.append(u)
                    cols.append(u)
            if cols:
                pn = np.stack(cols, axis=1)
                proj = pn @ pn.conj().T
                yn = proj @ r @ proj
                ys[c, n] = (yn + yn.conj().T) * 0.5
    return ys


def linf_norm_lower(
    x: PositiveSeq,
    p: float,
    w: Weight,
    majorant: MajorantCertificate | None = None,
) -> MajorantCertificate:
    """Feasible dual certificate: positive (y_n) with ||sum y_n||_{L_{p'}^w} = 1
    and value sum_n tau^w(x_n y_n) <= the true maximal norm."""
    if not 1 < p < math.inf:
        raise ValueError("the maximal norm solver needs p in (1, inf)")
    fl = x.filtration
    if majorant is None:
        majorant = linf_norm_upper(x, p, w)
    pp = p / (p - 1.0)
    xs = x.stacked()
    if not np.any(np.abs(xs) > 0):
        zero = tuple(OpStepFunction(fl, np.zeros_like(t.values)) for t in x.terms)
        return MajorantCertificate(majorant.upper_a, majorant.upper_value, zero, 0.0, majorant.cap_reached)
    if x.dim == 1:
        # scalar fast path: all mass on one maximizing term per cell
        vals = xs[:, :, 0, 0].real
        amax = vals.max(axis=1)
        pick = vals.argmax(axis=1)
        ys = np.zeros_like(xs)
        ys[np.arange(fl.n_cells), pick, 0, 0] = amax ** (p - 1.0)
    else:
        ys = _tight_dual_sequence(xs, majorant.upper_a.values, p)
    total = OpStepFunction(fl, ys.sum(axis=1))
    nu = weighted_lp_norm(total, pp, w)
    if nu == 0:
        lower = 0.0
    else:
        ys = ys / nu
        mu_w = fl.cell_lengths * w.values
        pair = np.einsum("cnij,cnji->c", xs, ys).real
        lower = float(math.fsum((pair * mu_w).tolist()))
    dual = tuple(OpStepFunction(fl, ys[:, n]) for n in range(ys.shape[1]))
    return MajorantCertificate(
        majorant.upper_a, majorant.upper_value, dual, lower, majorant.cap_reached
    )


def linf_norm_sandwich(x: PositiveSeq, p: float, w: Weight, **kw) -> MajorantCertificate:
    return linf_norm_lower(x, p, w, majorant=linf_norm_upper(x, p, w, **kw))


@dataclass(frozen=True)
class DoobRatios:
    upper_ratio: float
    lower_ratio: float
    certificate: MajorantCertificate


def doob_ratio(f: OpStepFunction, p: float, w: Weight) -> DoobRatios:
    """Sandwich of ||(E_n f)||_{L_p^w(ell_infty)} / ||f||_{L_p^w} for PSD f."""
    denom = weighted_lp_norm(f, p, w)
    if denom == 0:
        raise ValueError("ratio undefined for f = 0")
    cert = linf_norm_sandwich(PositiveSeq(tuple(martingale(f).terms)), p, w)
    return DoobRatios(cert.upper_value / denom, cert.lower_value / denom, cert)


# -- Cuculescu construction -------------------------------------------------

CLOSURE_TOL = 1e-10  # eigenvalues this close to {0, 1} count as inside [0, 1]


def meet_projection(projs, thresh: float = 1e-7) -> np.ndarray:
    """Pointwise meet of projections via spectral thresholding of sum(I - q).

    Eigenvectors with eigenvalue below ``thresh`` span the intersection of the
    ranges.
    """
    projs = list(projs)
    n_cells, d, _ = projs[0].shape
    s = np.zeros((n_cells, d, d), np.complex128)
    eye = np.eye(d, dtype=np.complex128)
    for q in projs:
        s += eye[None] - q
    wv, vv = np.linalg.eigh(matcore.hermitize(s))
    keep = (wv < thresh).astype(np.float64)
    return matcore.hermitize(np.einsum("cij,cj,ckj->cik", vv, keep, vv.conj()))


@dataclass(frozen=True)
class CuculescuResult:
    projections: tuple        # q_0 .. q_J as OpStepFunction
    meet_q: OpStepFunction
    lam: float
    p: float
    char: float               # [w]_{A_p} (or [w]_{A_1} at p = 1)
    tau_excess: float         # tau^w(I - q)
    weak_lhs: float           # lam * tau_excess^{1/p}
    weak_rhs: float           # char^{1/p} * ||f||_{L_p^w}

    @property
    def weak_ok(self) -> bool:
        return self.weak_lhs <= self.weak_rhs * (1 + 1e-6)


def cuculescu(f: OpStepFunction, lam: float, w: Weight, p: float) -> CuculescuResult:
    """Cuculescu's projections for the martingale E_n(f) at level lam.

    Inductively q_n = q_{n-1} I_[0,1](q_{n-1} E_n(f/lam) q_{n-1}) pointwise on
    each level-n atom; the meet q satisfies q E_n(f) q <= lam and the weighted
    weak-type bound lam * tau^w(I-q)^{1/p} <= [w]_{A_p}^{1/p} ||f||_{L_p^w}.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    fl = f.filtration
    d = f.dim
    from ._kernels import cuculescu_update_k

    q_cells = np.broadcast_to(np.eye(d, dtype=np.complex128), (fl.n_cells, d, d)).copy()
    projections = []
    for n in range(fl.depth + 1):
        e_n = fl.level_average(f.values, n) / lam
        starts = fl.level_starts[n]
        q_atoms = cuculescu_update_k(
            np.ascontiguousarray(q_cells[starts]),
            np.ascontiguousarray(e_n[starts]),
            CLOSURE_TOL,
        )
        q_cells = np.repeat(q_atoms, fl.atom_counts(n), axis=0)
        projections.append(OpStepFunction(fl, q_cells.copy()))
    meet = meet_projection([q.values for q in projections])
    meet_q = OpStepFunction(fl, meet)
    eye = OpStepFunction.constant(fl, np.eye(d, dtype=np.complex128))
    tau_excess = weighted_trace(eye - meet_q, w)
    tau_excess = max(tau_excess, 0.0)
    char = a1_char(w) if p == 1 else ap_char(w, p)
    norm = weighted_lp_norm(f, p, w)
    return CuculescuResult(
        tuple(projections),
        meet_q,
        float(lam),
        float(p),
        char,
        tau_excess,
        float(lam * tau_excess ** (1.0 / p)),
        float(char ** (1.0 / p) * norm),
    )


def cuculescu_defects(f: OpStepFunction, result: CuculescuResult) -> dict:
    """Max violations of the construction's structural properties.

    (i)   q_n is level-n measurable;
    (ii)  q_n commutes with q_{n-1} E_n(f/lam) q_{n-1};
    (iii) q_n E_n(f/lam) q_n <= q_n;
    (iv)  (q_{n-1}-q_n) E_n(f/lam) (q_{n-1}-q_n) >= q_{n-1}-q_n;
    meet: q E_n(f) q <= lam.
    """
    fl = f.filtration
    d = f.dim
    lam = result.lam
    eye = np.broadcast_to(np.eye(d, dtype=np.complex128), (fl.n_cells, d, d))
    q_prev = eye
    out = {"measurable": 0.0, "commutator": 0.0, "upper": 0.0, "lower": 0.0, "meet": 0.0}
    q_meet = result.meet_q.values
    for n in range(fl.depth + 1):
        e_n = fl.level_average(f.values, n) / lam
        q_n = result.projections[n].values
        if not fl.measurable_at(q_n, n, tol=1e-10):
            avg = fl.level_average(q_n, n)
            out["measurable"] = max(out["measurable"], float(np.abs(q_n - avg).max()))
        m = q_prev @ e_n @ q_prev
        comm = q_n @ m - m @ q_n
        out["commutator"] = max(out["commutator"], float(np.abs(comm).max()))
        upper = matcore.hermitize(q_n @ e_n @ q_n - q_n)
        out["upper"] = max(out["upper"], float(np.linalg.eigvalsh(upper).max()))
        ed = q_prev - q_n
        lower = matcore.hermitize(ed @ e_n @ ed - ed)
        out["lower"] = max(out["lower"], float(-np.linalg.eigvalsh(lower).min()))
        meet_term = matcore.hermitize(q_meet @ (e_n * lam) @ q_meet)
        out["meet"] = max(out["meet"], float(np.linalg.eigvalsh(meet_term).max()) - lam)
        q_prev = q_n
    return out


def scalar_exceedance_measure(f: OpStepFunction, lam: float, w: Weight) -> float:
    """Oracle for scalar f: the w-measure of {max_n E_n f > lam}."""
    fl = f.filtration
    vals = f.scalar_values
    running = np.full(fl.n_cells, -np.inf)
    for n in range(fl.depth + 1):
        running = np.maximum(running, fl.level_average(vals, n))
    mask = running > lam * (1 + CLOSURE_TOL)
    return float(np.sum(fl.cell_lengths[mask] * w.values[mask]))
