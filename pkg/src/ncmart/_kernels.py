"""Hot numeric kernels: per-cell PSD-majorant solves and Cuculescu updates.

The kernels are written as plain loops over small dense Hermitian matrices.
With the default backend every function below is jit-compiled by numba; with
``NCMART_NUMBA=0`` the same source runs as ordinary numpy code.  The rebinding
atte bottom of the module makes the jitted functions call each other (numba
resolves globals at first call).  ``benchmarks/bench_kernels.py`` times the
two backends against each other in separate processes.
"""

import numpy as np

from ._accel import NUMBA_ENABLED

_EQ_TOL = 1e-14  # relative tolerance for exact constraint dominance


def _psd_part(z):
    # spectral clamp of a Hermitian matrix at zero
    w, v = np.linalg.eigh(z)
    wp = np.maximum(w, 0.0)
    out = (v * wp.astype(np.complex128)) @ v.conj().T
    return (out + out.conj().T) * 0.5


def _tr_pow_psd(a, p):
    # trace of a^p with eigenvalues clamped at zero
    w = np.linalg.eigvalsh(a)
    s = 0.0
    for i in range(w.shape[0]):
        if w[i] > 0.0:
            s += w[i] ** p
    return s


def _mat_pow_psd(a, q):
    w, v = np.linalg.eigh(a)
    wq = np.empty_like(w)
    for i in range(w.shape[0]):
        wq[i] = w[i] ** q if w[i] > 0.0 else 0.0
    out = (v * wq.astype(np.complex128)) @ v.conj().T
    return (out + out.conj().T) * 0.5


def _dykstra_majorize(xs, a0, corr, max_cycles, move_tol, feas_tol, scale):
    """Project a0 (Frobenius) onto the intersection of {a : a >= xs[k]}.

    Dykstra's cyclic scheme with persistent correction terms ``corr`` (warm
    starts across consecutive projections).  Stops once a full cycle moves
    less than move_tol*scale and the worst constraint violation is below
    feas_tol*scale.
    """
    K = xs.shape[0]
    a = (a0 + a0.conj().T) * 0.5
    n_cycles = 0
    for _ in range(max_cycles):
        n_cycles += 1
        start = a.copy()
        for k in range(K):
            y = a - corr[k]
            z = y - xs[k]
            z = (z + z.conj().T) * 0.5
            pz = _psd_part(z)
            a = xs[k] + pz
            a = (a + a.conj().T) * 0.5
            corr[k] = a - y
        if np.abs(a - start).max() <= move_tol * scale:
            viol = 0.0
            for k in range(K):
                z = a - xs[k]
                z = (z + z.conj().T) * 0.5
                wmin = np.linalg.eigvalsh(z)[0]
                if -wmin > viol:
                    viol = -wmin
            if viol <= feas_tol * scale:
                break
    return a, n_cycles


def _screen_dominated(xs, scale):
    """Keep only Loewner-maximal constraints (dominated ones are implied)."""
    K = xs.shape[0]
    keep = np.ones(K, np.bool_)
    tol = _EQ_TOL * scale
    for n in range(K):
        for m in range(K):
            if m == n or not keep[m]:
                continue
            z = xs[m] - xs[n]
            z = (z + z.conj().T) * 0.5
            wmin = np.linalg.eigvalsh(z)[0]
            if wmin > tol or (wmin >= -tol and m < n):
                keep[n] = False
                break
    return keep


def _majorant_solve_cell(xs_all, p, max_iter, proj_cycles, move_tol, opt_tol):
    """Minimize tr(a^p) subject to a >= xs[k] for all k.

    Projected gradient with backtracking; the projection onto the constraint
    intersection is Dykstra's scheme above.  Returns (a, obj, iters, capped).
    """
    K_all = xs_all.shape[0]
    d = xs_all.shape[1]
    lmax = 0.0
    for k in range(K_all):
        w = np.linalg.eigvalsh(xs_all[k])
        if w[d - 1] > lmax:
            lmax = w[d - 1]
    a = np.zeros((d, d), np.complex128)
    if lmax <= 0.0:
        # all constraints are <= 0 and PSD by contract, so a = 0 is optimal
        return a, 0.0, 0, False
    keep = _screen_dominated(xs_all, lmax)
    K = int(keep.sum())
    xs = np.empty((K, d, d), np.complex128)
    j = 0
    for k in range(K_all):
        if keep[k]:
            xs[j] = xs_all[k]
            j += 1
    for i in range(d):
        a[i, i] = lmax
    corr = np.zeros((K, d, d), np.complex128)
    obj = _tr_pow_psd(a, p)
    eta = (lmax ** (2.0 - p)) / p
    stall = 0
    it = 0
    capped = True
    while it < max_iter:
        it += 1
        grad = p * _mat_pow_psd(a, p - 1.0)
        accepted = False
        cand = a
        cobj = obj
        for _ in range(40):
            trial = a - eta * grad
            cand, _ = _dykstra_majorize(
                xs, trial, corr, proj_cycles, move_tol, move_tol, lmax
            )
            cobj = _tr_pow_psd(cand, p)
            if cobj <= obj:
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            capped = False
            break
        rel = (obj - cobj) / (obj if obj > 1e-300 else 1e-300)
        move = np.abs(cand - a).max()
        a = cand
        obj = cobj
        eta *= 1.25
        if rel < opt_tol or move <= 1e-9 * lmax:
            stall += 1
            if stall >= 2:
                capped = False
                break
        else:
            stall = 0
    # final tight projection from cold corrections, then feasibility polish
    corr[:] = 0.0
    a, _ = _dykstra_majorize(xs, a, corr, proj_cycles, move_tol * 0.1, move_tol * 0.1, lmax)
    viol = 0.0
    for k in range(K):
        z = a - xs[k]
        z = (z + z.conj().T) * 0.5
        w = np.linalg.eigvalsh(z)
        if w[0] < viol:
            viol = w[0]
    if viol < 0.0:
        for i in range(d):
            a[i, i] += -viol + 1e-15 * lmax
    obj = _tr_pow_psd(a, p)
    return a, obj, it, capped


def _majorant_solve_cells(xs_cells, p, max_iter, proj_cycles, move_tol, opt_tol):
    """Run the per-cell majorant solve over a stack of cells (C, K, d, d)."""
    C = xs_cells.shape[0]
    d = xs_cells.shape[2]
    out = np.empty((C, d, d), np.complex128)
    objs = np.empty(C, np.float64)
    iters = np.empty(C, np.int64)
    capped = np.zeros(C, np.bool_)
    for c in range(C):
        a, obj, it, cap = _majorant_solve_cell(
            xs_cells[c], p, max_iter, proj_cycles, move_tol, opt_tol
        )
        out[c] = a
        objs[c] = obj
        iters[c] = it
        capped[c] = cap
    return out, objs, iters, capped


def _cuculescu_update(q_prev, e_vals, closure_tol):
    """One Cuculescu level: q_new = q I_[0,1](q e q) per atom, re-projected.

    Eigenvalues of q e q within ``closure_tol`` of the endpoints count as
    inside [0, 1].  The product is snapped back to an exact orthogonal
    projection by thresholding its eigenvalues at 1/2, which suppresses drift
    across levels.
    """
    A = q_prev.shape[0]
    d = q_prev.shape[1]
    out = np.empty_like(q_prev)
    for i in range(A):
        q = q_prev[i]
        m = q @ e_vals[i] @ q
        m = (m + m.conj().T) * 0.5
        w, v = np.linalg.eigh(m)
        sel = np.zeros(d, np.float64)
        for j in range(d):
            if w[j] >= -closure_tol and w[j] <= 1.0 + closure_tol:
                sel[j] = 1.0
        pr = (v * sel.astype(np.complex128)) @ v.conj().T
        qn = q @ pr @ q
        qn = (qn + qn.conj().T) * 0.5
        w2, v2 = np.linalg.eigh(qn)
        sel2 = np.zeros(d, np.float64)
        for j in range(d):
            if w2[j] > 0.5:
                sel2[j] = 1.0
        nxt = (v2 * sel2.astype(np.complex128)) @ v2.conj().T
        out[i] = (nxt + nxt.conj().T) * 0.5
    return out


if NUMBA_ENABLED:
    from numba import njit

    # Rebinding the module globals makes the compiled functions call each
    # other: numba resolves global names when it first compiles a caller.
    _psd_part = njit(cache=True)(_psd_part)
    _tr_pow_psd = njit(cache=True)(_tr_pow_psd)
    _mat_pow_psd = njit(cache=True)(_mat_pow_psd)
    _dykstra_majorize = njit(cache=True)(_dykstra_majorize)
    _screen_dominated = njit(cache=True)(_screen_dominated)
    _majorant_solve_cell = njit(cache=True)(_majorant_solve_cell)
    _majorant_solve_cells = njit(cache=True)(_majorant_solve_cells)
    _cuculescu_update = njit(cache=True)(_cuculescu_update)

psd_part_k = _psd_part
tr_pow_psd_k = _tr_pow_psd
mat_pow_psd_k = _mat_pow_psd
majorant_solve_cell_k = _majorant_solve_cell
majorant_solve_cells_k = _majorant_solve_cells
cuculescu_update_k = _cuculescu_update


def majorant_solve_cell_entry(xs, p, max_iter, proj_cycles, move_tol, opt_tol):
    """Python-facing single-cell entry (used by tests and benchmarks)."""
    return _majorant_solve_cell(
        np.ascontiguousarray(xs, dtype=np.complex128),
        float(p), int(max_iter), int(proj_cycles), float(move_tol), float(opt_tol),
    )
