"""A work qubit thermalized by randomly arriving coherent atom pairs.

The qubit uses the single-atom basis ``(|e>, |g>)``; pair states use
``|ee>, |eg>, |ge>, |gg>``.  Collision operators act on ``pair (x) qubit``
with the qubit as the least significant factor.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .dynamics import Trajectory
from .qlinalg import (SIGMA_MINUS, SIGMA_PLUS, SIGMA_X, SIGMA_Y, SIGMA_Z,
                      collective, embed_site, hermitize, matrix_exp, partial_trace)

SP, SM = SIGMA_PLUS, SIGMA_MINUS
COARSE_GRAIN_GTAU = 0.1


class DarkPairError(ValueError):
    """The pair neither excites nor de-excites the qubit (r_e = r_d = 0)."""


class InadmissibleSqueezingError(ValueError):
    pass


@dataclass(frozen=True)
class CollisionParams:
    p: float       # arrival rate
    g: float       # coupling
    tau: float     # interaction time
    omega0: float = 1.0

    def __post_init__(self):
        if min(self.p, self.g, self.tau, self.omega0) <= 0:
            raise ValueError("collision parameters must all be positive")
        if self.gtau > COARSE_GRAIN_GTAU:
            warnings.warn(f"g*tau = {self.gtau:g} > {COARSE_GRAIN_GTAU}; "
                          "the coarse-grained master equation is unreliable here",
                          stacklevel=2)

    @property
    def gtau(self) -> float:
        return self.g * self.tau

    @property
    def mu(self) -> float:
        return self.p * self.gtau**2

    @property
    def drive(self) -> float:
        """Prefactor ``p g tau`` of the coherent drive."""
        return self.p * self.gtau


@dataclass(frozen=True)
class DerivedRates:
    r_e: float
    r_d: float
    lam: complex
    epsilon: complex
    mu: float


@dataclass(frozen=True)
class SqueezedBathParams:
    n_eff: float
    gamma_eff: float
    m_complex: complex


@dataclass(frozen=True)
class BlochVector:
    sx: float
    sy: float
    sz: float

    def as_array(self):
        return np.array([self.sx, self.sy, self.sz])

    @classmethod
    def from_state(cls, rho):
        rho = np.asarray(rho)
        return cls(*(float(np.trace(s @ rho).real) for s in (SIGMA_X, SIGMA_Y, SIGMA_Z)))

    def to_state(self):
        return (np.eye(2) + self.sx * SIGMA_X + self.sy * SIGMA_Y + self.sz * SIGMA_Z) / 2


@dataclass(frozen=True)
class EffectiveTemperature:
    kind: str                # "positive", "negative", "zero-limit", "infinite"
    value: float | None      # hbar*omega0/k_B units when omega0 = 1

    def __str__(self):
        return self.kind if self.value is None else f"{self.kind}:{self.value:.12g}"


def derived_rates(pair, params: CollisionParams) -> DerivedRates:
    a = np.asarray(pair, dtype=complex)
    if a.shape != (4, 4):
        raise ValueError("pair state must be 4x4")
    central = a[1, 1] + a[1, 2] + a[2, 1] + a[2, 2]
    return DerivedRates(
        r_e=float((2 * a[0, 0] + central).real),
        r_d=float((2 * a[3, 3] + central).real),
        lam=complex(a[0, 1] + a[0, 2] + a[1, 3] + a[2, 3]),
        epsilon=complex(a[0, 3]),
        mu=params.mu,
    )


def squeezed_params(rates: DerivedRates) -> SqueezedBathParams:
    """Rewrite the pair-induced dissipator as a squeezed thermal bath."""
    diff = rates.r_d - rates.r_e
    if abs(diff) <= 1e-14 * max(1.0, rates.r_d + rates.r_e):
        raise ZeroDivisionError("r_d = r_e: squeezed parameterization is singular")
    gamma = rates.mu * diff
    return SqueezedBathParams(rates.r_e / diff, gamma, -2 * rates.epsilon * rates.mu / gamma)


def interaction_hamiltonian(g: float) -> np.ndarray:
    """``g sum_i (s_i^+ s_0^- + s_i^- s_0^+)`` on ``pair (x) qubit``."""
    h = np.zeros((8, 8), dtype=complex)
    for i in (1, 2):
        h += embed_site(SP, i, 3) @ embed_site(SM, 3, 3)
        h += embed_site(SM, i, 3) @ embed_site(SP, 3, 3)
    return g * h


def collision_unitary(params: CollisionParams, order: str = "exact") -> np.ndarray:
    """Collision propagator; ``order="second"`` is the block truncation in g*tau."""
    x = params.gtau
    if order == "exact":
        return matrix_exp(interaction_hamiltonian(1.0), -1j * x)
    if order != "second":
        raise ValueError(f"order must be 'exact' or 'second', got {order!r}")
    one = np.eye(2, dtype=complex)
    z = np.zeros((2, 2), dtype=complex)
    blocks = [
        [one - x**2 * SM @ SP, -1j * x * SM, -1j * x * SM, z],
        [-1j * x * SP, (1 - x**2 / 2) * one, -(x**2 / 2) * one, -1j * x * SM],
        [-1j * x * SP, -(x**2 / 2) * one, (1 - x**2 / 2) * one, -1j * x * SM],
        [z, -1j * x * SP, -1j * x * SP, one - x**2 * SP @ SM],
    ]
    return np.block(blocks)


def collide(rho_q, pair, u) -> np.ndarray:
    """One collision: entangle with a fresh pair, then discard the pair."""
    joint = np.kron(pair, rho_q)
    return partial_trace(u @ joint @ u.conj().T, [3])


def collision_channel(pair, u) -> np.ndarray:
    """4x4 matrix of :func:`collide` acting on the row-major ``vec(rho_q)``."""
    t = np.zeros((4, 4), dtype=complex)
    for k in range(4):
        unit = np.zeros(4, dtype=complex)
        unit[k] = 1
        t[:, k] = collide(unit.reshape(2, 2), pair, u).reshape(-1)
    return t


def _lindblad_e(rho):
    return 2 * SP @ rho @ SM - SM @ SP @ rho - rho @ SM @ SP


def _lindblad_d(rho):
    return 2 * SM @ rho @ SP - SP @ SM @ rho - rho @ SP @ SM


def effective_hamiltonian(rates: DerivedRates, params: CollisionParams):
    return params.drive * (rates.lam * SP + np.conj(rates.lam) * SM)


def dissipator(rho_q, rates: DerivedRates) -> np.ndarray:
    """Non-unitary part: squeezing terms plus excitation/de-excitation."""
    mu = rates.mu
    squeeze = 2 * mu * (rates.epsilon * SP @ rho_q @ SP
                        + np.conj(rates.epsilon) * SM @ rho_q @ SM)
    thermal = mu * (rates.r_e / 2 * _lindblad_e(rho_q) + rates.r_d / 2 * _lindblad_d(rho_q))
    return squeeze + thermal


def coarse_grained_rhs(rho_q, rates: DerivedRates, params: CollisionParams,
                       free_omega: float = 0.0) -> np.ndarray:
    """Coarse-grained qubit master equation in the interaction picture.

    ``free_omega`` adds ``-i[free_omega/2 sigma_z, rho]``, i.e. evolves under
    the full ``H_eff + omega/2 sigma_z`` used for energy accounting.
    """
    rho_q = np.asarray(rho_q, dtype=complex)
    h = effective_hamiltonian(rates, params)
    if free_omega:
        h = h + 0.5 * free_omega * SIGMA_Z
    return -1j * (h @ rho_q - rho_q @ h) + dissipator(rho_q, rates)


def _bloch_coefficients(rates, squeezed, params):
    n, g, m = squeezed.n_eff, squeezed.gamma_eff, squeezed.m_complex
    w, lam = params.drive, rates.lam
    return n, g, m, np.conj(m), w, lam, np.conj(lam)


def bloch_rhs(v, rates: DerivedRates, squeezed: SqueezedBathParams,
              params: CollisionParams) -> np.ndarray:
    """Bloch equations of the coarse-grained master equation.

    The two transverse components relax at different rates,
    ``gamma/2 (2N+1 +- (M+M*))``, and the drive enters as a rotation.
    """
    sx, sy, sz = (v.as_array() if isinstance(v, BlochVector) else np.asarray(v, float))
    n, g, m, mc, w, lam, lc = _bloch_coefficients(rates, squeezed, params)
    plus, minus = 2 * n + 1 + m + mc, 2 * n + 1 - m - mc
    dx = -g / 2 * plus * sx - 1j * g / 2 * (m - mc) * sy + 1j * w * (lam - lc) * sz
    dy = -g / 2 * minus * sy - 1j * g / 2 * (m - mc) * sx - w * (lam + lc) * sz
    dz = -g * ((2 * n + 1) * sz + 1) - 1j * w * (lam - lc) * sx + w * (lam + lc) * sy
    return np.real_if_close(np.array([dx, dy, dz]), tol=1e6).real


def bloch_rhs_variant(v, rates, squeezed, params) -> np.ndarray:
    """A second form of the Bloch equations, kept for comparison.

    It differs from :func:`bloch_rhs`: the transverse rates carry the same
    sign of ``M+M*`` and the drive terms are not a rotation (x, y
    coefficients halved, z coefficients doubled).
    """
    sx, sy, sz = (v.as_array() if isinstance(v, BlochVector) else np.asarray(v, float))
    n, g, m, mc, w, lam, lc = _bloch_coefficients(rates, squeezed, params)
    a = 2 * n + m + mc + 1
    dx = -g / 2 * a * sx - 1j * g / 2 * (m - mc) * sy + 0.5j * w * (lam - lc) * sz
    dy = -g / 2 * a * sy - 1j * g / 2 * (m - mc) * sx - 0.5 * w * (lam + lc) * sz
    dz = -g * ((2 * n + 1) * sz + 1) - 2j * w * ((lam - lc) * sx + 1j * (lam + lc) * sy)
    return np.real_if_close(np.array([dx, dy, dz]), tol=1e6).real


def bloch_steady_closed_form(rates, squeezed, params) -> BlochVector:
    """Closed-form fixed point of :func:`bloch_rhs`."""
    n, g, m, mc, w, lam, lc = _bloch_coefficients(rates, squeezed, params)
    ap, am, b = 2 * n + 1 + m + mc, 2 * n + 1 - m - mc, m - mc
    lm, lp = lam - lc, lam + lc
    det = ap * am + b**2
    d = w**2 / 2 * (am * lm**2 - ap * lp**2 + 2 * b * lp * lm) \
        - g**2 * (2 * n + 1) / 4 * det
    if abs(d) < 1e-300:
        raise ZeroDivisionError("degenerate Bloch steady state (d = 0)")
    sx = 1j * g * w / 2 * (am * lm + b * lp) / d
    sy = g * w / 2 * (b * lm - ap * lp) / d
    sz = g**2 / 4 * det / d
    return BlochVector(*(float(np.real(c)) for c in (sx, sy, sz)))


def bloch_steady_variant(rates, squeezed, params) -> BlochVector:
    """Closed-form fixed point of :func:`bloch_rhs_variant`."""
    n, g, m, mc, w, lam, lc = _bloch_coefficients(rates, squeezed, params)
    a, b = 2 * n + m + mc + 1, m - mc
    d = (w**2 * (b * (lam**2 - lc**2) - 2 * lam * lc * a)
         - g**2 * (2 * n + 1) / 4 * (a**2 + b**2))
    if abs(d) < 1e-300:
        raise ZeroDivisionError("degenerate Bloch steady state (d = 0)")
    sx = 1j * g * w / 4 * (a * (lam - lc) + b * (lam + lc)) / d
    sy = -g * w / 4 * (a * (lam + lc) - b * (lam - lc)) / d
    sz = g**2 / 4 * (a**2 + b**2) / d
    return BlochVector(*(float(np.real(c)) for c in (sx, sy, sz)))


def qubit_steady_state(rates: DerivedRates, lam_tol: float = 1e-12) -> np.ndarray:
    if abs(rates.lam) > lam_tol:
        raise ValueError("diagonal steady state requires lambda = 0")
    total = rates.r_e + rates.r_d
    if total <= 0:
        raise DarkPairError("dark pair: r_e + r_d = 0, the qubit is never touched")
    return np.diag([rates.r_e / total, rates.r_d / total]).astype(complex)


def effective_temperature(rates: DerivedRates, omega0: float = 1.0) -> EffectiveTemperature:
    """Temperature at which ``diag(r_e, r_d)/(r_e + r_d)`` is a Gibbs state."""
    re, rd = rates.r_e, rates.r_d
    if re < 0 or rd < 0:
        raise ValueError("rates must be nonnegative")
    if re == 0 and rd == 0:
        raise DarkPairError("dark pair: no effective temperature")
    if re == 0:
        return EffectiveTemperature("zero-limit", 0.0)
    if rd == 0:
        return EffectiveTemperature("negative", -0.0)
    if math.isclose(re, rd, rel_tol=1e-14, abs_tol=0.0):
        return EffectiveTemperature("infinite", None)
    t = -omega0 / math.log(re / rd)
    return EffectiveTemperature("positive" if t > 0 else "negative", t)


def heat_current(rho_q, rates: DerivedRates, params: CollisionParams,
                 omega: float | None = None) -> float:
    """``Tr[(H_eff + omega/2 sigma_z) D(rho)]`` summed over all dissipators."""
    omega = params.omega0 if omega is None else omega
    h = effective_hamiltonian(rates, params) + 0.5 * omega * SIGMA_Z
    return float(np.trace(h @ dissipator(np.asarray(rho_q, complex), rates)).real)


def heat_current_closed_form(rho_q, rates, squeezed, params, omega=None) -> float:
    """A closed-form heat current, reported next to :func:`heat_current`.

    Unlike the definitional value it does not vanish at the lambda = 0
    steady state.
    """
    omega = params.omega0 if omega is None else omega
    rho_q = np.asarray(rho_q, complex)
    sz = (rho_q[0, 0] - rho_q[1, 1]).real
    s_plus, s_minus = rho_q[1, 0], rho_q[0, 1]
    n, g, m = squeezed.n_eff, squeezed.gamma_eff, squeezed.m_complex
    lam = rates.lam
    k = (2 * n + 1) / 2
    j = g / 4 * omega * (1 - (2 * n + 1) * sz) - g / 2 * params.drive * (
        np.conj(lam) * (k * s_minus + s_plus * m) + lam * (s_minus * np.conj(m) + k * s_plus))
    return float(np.real(j))


def power(rho_q, params: CollisionParams, lambda_dot: complex = 0.0,
          omega_dot: float = 0.0) -> float:
    rho_q = np.asarray(rho_q, complex)
    sz = (rho_q[0, 0] - rho_q[1, 1]).real
    s_plus, s_minus = rho_q[1, 0], rho_q[0, 1]
    drive = lambda_dot * s_plus + np.conj(lambda_dot) * s_minus
    return float(0.5 * omega_dot * sz + params.drive * np.real(drive))


@dataclass(frozen=True)
class SqueezedDecomposition:
    n_th: float
    r: float
    phi: float
    jumps: tuple[np.ndarray, np.ndarray]   # R1, R2


def squeezed_decomposition(squeezed: SqueezedBathParams,
                           rel_tol: float = 1e-12) -> SqueezedDecomposition:
    """Two-channel form with ``R = s^- cosh r + e^{i phi} s^+ sinh r``.

    Uses ``N = N_th cosh^2 r + (N_th+1) sinh^2 r`` and
    ``M e^{i phi} = -(2 N_th + 1) cosh r sinh r e^{i phi}``.
    """
    n, g, m = squeezed.n_eff, squeezed.gamma_eff, squeezed.m_complex
    if n < 0 or g <= 0:
        raise InadmissibleSqueezingError(f"needs N >= 0 and gamma > 0 (N={n}, gamma={g})")
    bound = n * (n + 1)
    if abs(m) ** 2 > bound * (1 + rel_tol) + rel_tol:
        raise InadmissibleSqueezingError(f"|M|^2 = {abs(m) ** 2:.12g} exceeds N(N+1) = {bound:.12g}")
    width2 = max((2 * n + 1) ** 2 - 4 * abs(m) ** 2, 1.0)
    n_th = (math.sqrt(width2) - 1) / 2
    r = 0.5 * math.atanh(min(2 * abs(m) / (2 * n + 1), 1.0 - 1e-16)) if m else 0.0
    phi = float(np.angle(-m)) if m else 0.0
    big_r = SM * math.cosh(r) + np.exp(1j * phi) * SP * math.sinh(r)
    r1 = math.sqrt(g * (n_th + 1) / 2) * big_r
    r2 = math.sqrt(g * n_th / 2) * big_r.conj().T
    return SqueezedDecomposition(n_th, r, phi, (r1, r2))


def squeezed_dissipator(rho_q, squeezed: SqueezedBathParams) -> np.ndarray:
    """The (N, M) dissipator written with the squeezed-bath parameters."""
    n, g, m = squeezed.n_eff, squeezed.gamma_eff, squeezed.m_complex
    return (g * (n + 1) / 2 * _lindblad_d(rho_q) + g * n / 2 * _lindblad_e(rho_q)
            - g * m * SP @ rho_q @ SP - g * np.conj(m) * SM @ rho_q @ SM)


def jump_dissipator(rho_q, jumps) -> np.ndarray:
    out = np.zeros((2, 2), dtype=complex)
    for r in jumps:
        rd = r.conj().T
        out += 2 * r @ rho_q @ rd - rd @ r @ rho_q - rho_q @ rd @ r
    return out


def monte_carlo_collisions(rho_q0, pair, params: CollisionParams, total_time: float,
                           seed: int, order: str = "exact",
                           pair_sampling: str = "mixed") -> Trajectory:
    """Sample a collision history with exponential inter-arrival times.

    Each arrival applies the collision unitary to ``pair (x) qubit`` and
    traces the pair out.  ``pair_sampling="ensemble"`` instead draws every
    arriving pair as a pure eigenstate of ``pair`` with its eigenweight,
    which leaves the ensemble average unchanged but makes single histories
    fluctuate.  States are recorded at ``t = 0``, after every collision and
    at ``total_time``.

    The collision map is tabulated once per distinct pair state by pushing
    the four matrix units through :func:`collide`; the trace is restored
    after every collision so that the ~1e-15 unitarity defect of ``U`` does
    not accumulate over long histories.
    """
    if total_time < 0:
        raise ValueError("total_time must be >= 0")
    if pair_sampling not in ("mixed", "ensemble"):
        raise ValueError(f"unknown pair_sampling {pair_sampling!r}")
    rng = np.random.default_rng(seed)
    u = collision_unitary(params, order)
    pair = np.asarray(pair, dtype=complex)
    if pair_sampling == "ensemble":
        w, v = np.linalg.eigh(hermitize(pair))
        w = np.clip(w, 0, None)
        cum = np.cumsum(w / w.sum())
        channels = [collision_channel(np.outer(v[:, k], v[:, k].conj()), u)
                    for k in range(4)]
    else:
        channels = [collision_channel(pair, u)]
    rho = np.array(rho_q0, dtype=complex)
    times, states, counts = [0.0], [rho.copy()], [0]
    t = rng.exponential(1 / params.p)
    while t <= total_time:
        k = min(int(np.searchsorted(cum, rng.random(), side="right")), 3) \
            if pair_sampling == "ensemble" else 0
        rho = (channels[k] @ rho.reshape(-1)).reshape(2, 2)
        rho = hermitize(rho) / np.trace(rho).real
        times.append(t)
        states.append(rho)
        counts.append(counts[-1] + 1)
        t += rng.exponential(1 / params.p)
    if total_time > times[-1]:
        times.append(total_time)
        states.append(rho.copy())
        counts.append(counts[-1])
    return Trajectory(np.array(times), np.array(states), {"collisions": np.array(counts)})


def with_lambda(rates: DerivedRates, lam: complex) -> DerivedRates:
    return replace(rates, lam=complex(lam))
