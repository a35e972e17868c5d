"""Dense Hermitian linear algebra: spectral calculus and the Loewner order.

Matrices are plain complex numpy arrays of shape (d, d) with conjugate
symmetry; every composite result is re-symmetrized to suppress drift.
Sizes are desk scale (d <= 16), so everything goes through LAPACK ``eigh``.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

HERM_TOL = 1e-12      # conjugate-symmetry tolerance on inputs
RECON_TOL = 1e-10     # eigendecomposition reconstruction target
ORDER_TOL = 1e-9      # default relative tolerance for order checks
ENDPOINT_TOL = 1e-10  # spectral-window endpoint assignment


class SpectralDecomposition(NamedTuple):
    eigenvalues: np.ndarray   # real, ascending
    eigenvectors: np.ndarray  # unitary, one eigenvector per column


def hermitize(x: np.ndarray) -> np.ndarray:
    """(x + x*) / 2, applied after arithmetic composites."""
    return (x + np.swapaxes(x.conj(), -1, -2)) * 0.5


def herm_defect(x: np.ndarray) -> float:
    return float(np.abs(x - np.swapaxes(x.conj(), -1, -2)).max())


def check_hermitian(x: np.ndarray, tol: float = HERM_TOL) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {x.shape}")
    defect = herm_defect(x)
    if defect > tol:
        raise ValueError(f"matrix is not Hermitian: max asymmetry {defect:.3e} > {tol:.1e}")
    return x


def eigh(x: np.ndarray, check: bool = True) -> SpectralDecomposition:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending."""
    if check:
        x = check_hermitian(x)
    w, v = np.linalg.eigh(x)
    return SpectralDecomposition(w, v)


def spectral_projection(
    x: np.ndarray,
    lo: float = -math.inf,
    hi: float = math.inf,
    closed_lo: bool = True,
    closed_hi: bool = True,
    endpoint_tol: float = ENDPOINT_TOL,
) -> np.ndarray:
    """Spectral projection I_B(x) for the interval B = (lo, hi) with the
    declared endpoint closures.

    Eigenvalues within ``endpoint_tol`` of an endpoint are assigned by the
    closure flag of that endpoint.
    """
    w, v = eigh(x)
    near_lo = np.abs(w - lo) <= endpoint_tol
    near_hi = np.abs(w - hi) <= endpoint_tol
    inside = (w > lo) & (w < hi)
    keep = np.where(near_lo, closed_lo, np.where(near_hi, closed_hi, inside))
    cols = v[:, keep]
    return hermitize(cols @ cols.conj().T)


def func_calc(x: np.ndarray, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """U diag(f(lambda)) U* for a real function f defined on the spectrum."""
    w, v = eigh(x)
    with np.errstate(all="ignore"):
        try:
            fw = np.asarray(f(w), dtype=np.float64)
            if fw.shape != w.shape:
                raise TypeError
        except (TypeError, ValueError):
            fw = np.array([float(f(t)) for t in w])
    if not np.all(np.isfinite(fw)):
        raise ValueError("function is undefined (non-finite) on part of the spectrum")
    return hermitize((v * fw.astype(np.complex128)) @ v.conj().T)


def loewner_leq(a: np.ndarray, b: np.ndarray, tol: float = ORDER_TOL) -> bool:
    """True iff a <= b in the PSD order, up to a relative slack.

    The test is lambda_min(b - a) >= -tol * (||a|| + ||b||) in operator norm.
    """
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.shape != b.shape:
        raise ValueError("dimension mismatch in Loewner comparison")
    wm = np.linalg.eigvalsh(hermitize(b - a))[0]
    scale = schatten_norm(a, math.inf) + schatten_norm(b, math.inf)
    return bool(wm >= -tol * scale)


def schatten_norm(x: np.ndarray, p: float) -> float:
    """(sum |lambda_i|^p)^(1/p) with the unnormalized trace; sup |lambda| at p=inf."""
    if p < 1:
        raise ValueError(f"Schatten norm needs p >= 1, got {p}")
    w = np.linalg.eigvalsh(hermitize(np.asarray(x, dtype=np.complex128)))
    if math.isinf(p):
        return float(np.abs(w).max()) if w.size else 0.0
    return float(np.sum(np.abs(w) ** p) ** (1.0 / p))


def positive_part(x: np.ndarray) -> np.ndarray:
    """Spectral clamp max(x, 0); the projection step of the majorant search."""
    w, v = eigh(x)
    wp = np.maximum(w, 0.0)
    return hermitize((v * wp.astype(np.complex128)) @ v.conj().T)


def identity(d: int) -> np.ndarray:
    return np.eye(d, dtype=np.complex128)


def op_norm(x: np.ndarray) -> float:
    return schatten_norm(x, math.inf)
