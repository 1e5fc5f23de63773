"""Time evolution under a Liouvillian and steady-state extraction."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np
import scipy.linalg

from .qlinalg import hermitize

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Base class for failures of the numerical machinery."""


class IntegrationError(NumericalError):
    def __init__(self, message, t=None):
        super().__init__(message if t is None else f"{message} at t={t:.6g}")
        self.t = t


class DegenerateSteadyStateError(NumericalError):
    def __init__(self, dim):
        super().__init__(
            f"steady-state null space has dimension {dim}; pass an initial "
            "state to select the corresponding long-time limit")
        self.dim = dim


class ConvergenceError(NumericalError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float = np.inf
    hermitize_every: int = 50
    min_step: float = 1e-14

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0 and self.max_step > 0):
            raise ValueError("tolerances and max_step must be positive")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray | None = None
    observables: dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self):
        return len(self.times)


# Dormand-Prince 5(4) tableau
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_E = _B - np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640,
                    -92097 / 339200, 187 / 2100, 1 / 40])


def integrate(rhs: Callable, y0, times, cfg: IntegratorConfig = IntegratorConfig(),
              record: Callable | None = None, project: Callable | None = None):
    """Adaptive Dormand-Prince integration of ``dy/dt = rhs(t, y)``.

    Steps are shortened to land exactly on each requested time.
    ``record(t, y)`` is called at every output time (including ``times[0]``)
    and ``project(y)`` every ``cfg.hermitize_every`` accepted steps.
    Returns the final state.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise ValueError("times must be a nonempty 1-d sequence")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    y = np.array(y0, dtype=complex)
    t = times[0]
    if record is not None:
        record(t, y)
    if len(times) == 1:
        return y
    k1 = rhs(t, y)
    h = _initial_step(rhs, t, y, k1, cfg, times[-1] - t)
    accepted = 0
    for t_next in times[1:]:
        while t < t_next:
            h_try = min(h, cfg.max_step, t_next - t)
            last = h_try >= t_next - t
            if h_try < cfg.min_step * max(1.0, abs(t)):
                raise IntegrationError("step size underflow", t)
            k = [k1]
            for i in range(1, 7):
                yi = y + h_try * sum(a * kk for a, kk in zip(_A[i], k) if a)
                k.append(rhs(t + _C[i] * h_try, yi))
            y_new = yi  # row 7 of the tableau equals the 5th-order weights
            err_vec = h_try * sum(e * kk for e, kk in zip(_E, k) if e)
            scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = np.sqrt(np.mean(np.abs(err_vec / scale) ** 2))
            if not np.isfinite(err):
                h = h_try * 0.1
                continue
            if err <= 1.0:
                t = t_next if last else t + h_try
                y = y_new
                k1 = k[6]
                accepted += 1
                if project is not None and accepted % cfg.hermitize_every == 0:
                    y = project(y)
                    k1 = rhs(t, y)
                fac = 10.0 if err == 0 else min(10.0, 0.9 * err ** -0.2)
                # a step cut short by an output time says nothing about h
                if not last or h_try >= h:
                    h = h_try * fac
            else:
                h = h_try * max(0.2, 0.9 * err ** -0.2)
        if record is not None:
            record(t, y)
    return y


def _initial_step(rhs, t, y, f0, cfg, span):
    scale = cfg.atol + cfg.rtol * np.abs(y)
    d0 = np.sqrt(np.mean(np.abs(y / scale) ** 2))
    d1 = np.sqrt(np.mean(np.abs(f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span, cfg.max_step)
    y1 = y + h0 * f0
    d2 = np.sqrt(np.mean(np.abs((rhs(t + h0, y1) - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span, cfg.max_step)


def evolve(L, rho0, times, cfg: IntegratorConfig = IntegratorConfig(),
           probes: Mapping[str, Callable] | None = None,
           store_states: bool | None = None) -> Trajectory:
    """Integrate ``d rho/dt = L(rho)`` and sample at ``times``.

    With ``probes`` (name -> function of the state) only the observables are
    recorded unless ``store_states=True``.
    """
    d = L.dim
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (d, d):
        raise ValueError(f"initial state shape {rho0.shape} does not match dim {d}")
    times = np.asarray(times, dtype=float)
    if times[0] < 0:
        raise ValueError("times must start at t >= 0")
    if store_states is None:
        store_states = not probes
    states, obs = [], {name: [] for name in (probes or {})}

    def record(t, v):
        rho = v.reshape(d, d)
        if store_states:
            states.append(rho.copy())
        for name, fn in (probes or {}).items():
            obs[name].append(fn(rho))

    def project(v):
        return hermitize(v.reshape(d, d)).reshape(-1)

    integrate(lambda t, v: L.apply_vec(v), rho0.reshape(-1), times, cfg,
              record=record, project=project)
    return Trajectory(times, np.array(states) if store_states else None,
                      {k: np.array(v) for k, v in obs.items()})


def null_space(L, rtol: float = 1e-10):
    """Right and left null vectors of a dense Liouvillian."""
    s = L.superoperator
    u, sv, vh = scipy.linalg.svd(s)
    cut = rtol * max(1.0, sv[0])
    k = int(np.sum(sv <= cut))
    return vh[len(sv) - k:].conj().T, u[:, len(sv) - k:]


def _finalize(L, v):
    rho = hermitize(v.reshape(L.dim, L.dim))
    return rho / np.trace(rho).real


def steady_state_null(L, rho0=None, residual_tol: float = 1e-10) -> np.ndarray:
    """Stationary state from the null space of the dense superoperator.

    A null space of dimension one gives the unique steady state.  Larger
    null spaces (e.g. the dark singlet sector of perfectly collective decay)
    require ``rho0``; the result is then the spectral projection of ``rho0``
    onto the null space, i.e. its long-time limit.
    """
    right, left = null_space(L)
    dim = right.shape[1]
    if dim == 0:
        raise NumericalError("superoperator has no null vector")
    if dim == 1:
        rho = _finalize(L, right[:, 0])
    else:
        if rho0 is None:
            raise DegenerateSteadyStateError(dim)
        log.info("null space of dimension %d, projecting the initial state", dim)
        v0 = np.asarray(rho0, dtype=complex).reshape(-1)
        wr = left.conj().T @ right
        rho = _finalize(L, right @ np.linalg.solve(wr, left.conj().T @ v0))
    res = np.abs(L.apply(rho)).max()
    if res > residual_tol:
        raise NumericalError(f"steady-state residual {res:.3g} exceeds {residual_tol:.3g}")
    return rho


def residual_norm(L, rho) -> float:
    """Entrywise l1 norm of ``L(rho)``."""
    return float(np.abs(L.apply(rho)).sum())


def spectral_radius_estimate(L, iters: int = 40, seed: int = 0) -> float:
    """Growth rate ``(||L^k v|| / ||v||)^(1/k)`` of repeated application."""
    rng = np.random.default_rng(seed)
    v = rng.normal(size=L.dim**2) + 1j * rng.normal(size=L.dim**2)
    v /= np.linalg.norm(v)
    log_growth = 0.0
    for _ in range(iters):
        v = L.apply_vec(v)
        nv = np.linalg.norm(v)
        if nv == 0:
            return 0.0
        log_growth += np.log(nv)
        v /= nv
    return float(np.exp(log_growth / iters))


def steady_state_longtime(L, rho0, conv_tol: float = 1e-8,
                          cfg: IntegratorConfig = IntegratorConfig(),
                          horizon: float = 1e3, chunk: float = 0.25):
    """Integrate until ``||L(rho)||_1 <= conv_tol``.

    Returns ``(rho, t_converged)``; convergence is checked every ``chunk``
    time units, so ``t_converged`` has that granularity.  The step is kept
    inside the explicit stability region: near a fixed point an adaptive
    explicit step otherwise grows to the stability edge and the residual
    stalls at about ``atol`` times the stiffest rate.
    """
    if not conv_tol > 0:
        raise ValueError("conv_tol must be positive")
    rad = spectral_radius_estimate(L)
    if rad > 0:
        cfg = replace(cfg, max_step=min(cfg.max_step, 2.0 / rad))
    rho = np.asarray(rho0, dtype=complex)
    t = 0.0
    d = L.dim
    while residual_norm(L, rho) > conv_tol:
        if t >= horizon:
            raise ConvergenceError(
                f"no convergence to {conv_tol:g} within t={horizon:g} "
                f"(residual {residual_norm(L, rho):.3g})")
        v = integrate(lambda _t, x: L.apply_vec(x), rho.reshape(-1),
                      [t, t + chunk], cfg,
                      project=lambda x: hermitize(x.reshape(d, d)).reshape(-1))
        rho = hermitize(v.reshape(d, d))
        t += chunk
        chunk = min(2 * chunk, 8.0)
    return rho, t
