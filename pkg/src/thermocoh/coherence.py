"""l1-norm coherence, the two-atom thermal law, block structure and fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qlinalg import excitation_numbers, n_qubits

NBAR_ZERO = 1e-12


def l1_coherence(rho) -> float:
    """Sum of moduli of the off-diagonal elements in the excitation basis."""
    a = np.abs(np.asarray(rho))
    return float(a.sum() - np.trace(a))


def pair_plateau(nbar: float) -> float:
    """Long-time coherence of two collectively damped atoms from the ground state."""
    x = nbar * (nbar + 1)
    return x / (3 * x + 1)


def analytic_pair_coherence(nbar: float, t, gamma0: float = 1.0):
    """Coherence of two atoms that start in ``|gg>``; independent of ``f0``.

    Vectorized over ``t``.
    """
    t = np.asarray(t, dtype=float)
    if nbar < 0 or np.any(t < 0):
        raise ValueError("nbar and t must be nonnegative")
    if nbar < NBAR_ZERO:
        return np.zeros_like(t) if t.ndim else 0.0
    x = nbar * (nbar + 1)
    sq = np.sqrt(x)
    a = 2 * gamma0 * (2 * nbar + 1)
    b = 2 * gamma0 * sq
    # e^{-at} cosh(bt) and e^{-at} sinh(bt) without overflow
    ep, em = np.exp((b - a) * t), np.exp(-(a + b) * t)
    ch, sh = (ep + em) / 2, (ep - em) / 2
    out = x / (3 * x + 1) - nbar * ((nbar + 1) * sq * ch - nbar**2 * sh) / ((3 * x + 1) * sq)
    return out if t.ndim else float(out)


@dataclass(frozen=True)
class CoherenceReport:
    total_l1: float
    per_block_l1: list[tuple[int, float]]
    off_block_l1: float


def block_report(rho) -> CoherenceReport:
    """Split l1 coherence into equal-excitation blocks and the remainder."""
    rho = np.asarray(rho)
    n = n_qubits(rho.shape[0])
    exc = excitation_numbers(n)
    a = np.abs(rho).copy()
    np.fill_diagonal(a, 0.0)
    same = exc[:, None] == exc[None, :]
    blocks = [(k, float(a[np.ix_(exc == k, exc == k)].sum())) for k in range(n + 1)]
    off = float(a[~same].sum())
    return CoherenceReport(off + sum(v for _, v in blocks), blocks, off)


@dataclass(frozen=True)
class CubicFit:
    coefficients: tuple[float, float, float, float]  # c0 + c1 x + c2 x^2 + c3 x^3
    r_squared: float

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(x, self.coefficients)


def cubic_fit(xs, ys) -> CubicFit:
    """Least-squares cubic with its coefficient of determination.

    A zero-variance target with zero residual is scored ``r_squared = 1``.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) != len(ys):
        raise ValueError("xs and ys differ in length")
    if len(xs) < 5:
        raise ValueError("cubic_fit needs at least 5 points")
    coef = np.polynomial.polynomial.polyfit(xs, ys, 3)
    resid = ys - np.polynomial.polynomial.polyval(xs, coef)
    ss_res = float(resid @ resid)
    ss_tot = float(((ys - ys.mean()) ** 2).sum())
    scale = max(1.0, float(ys @ ys))
    if ss_tot <= 1e-30 * scale:
        r2 = 1.0 if ss_res <= 1e-24 * scale else 0.0
    else:
        r2 = min(1.0, max(0.0, 1 - ss_res / ss_tot))
    return CubicFit(tuple(float(c) for c in coef), r2)
