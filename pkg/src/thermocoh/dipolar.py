"""Dipole-coupled two-level atoms in a common thermal photon bath.

Units: hbar = 1, rates in units of the single-atom emission rate gamma0,
time in units of 1/gamma0, distances as xi = k0 * r.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .qlinalg import SIGMA_MINUS, SIGMA_PLUS, embed_site, kron

DENSE_MAX_ATOMS = 4
MATRIX_FREE_MAX_ATOMS = 10
COINCIDENT_XI = 1e-6


@dataclass(frozen=True)
class AtomGeometry:
    """Atom positions (rows, units of 1/k0) and a common dipole direction."""

    positions: np.ndarray
    dipole_orientation: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.shape[1] != 3:
            raise ValueError(f"positions must be Nx3, got shape {pos.shape}")
        d = np.asarray(self.dipole_orientation, dtype=float)
        if d.shape != (3,) or abs(np.linalg.norm(d) - 1) > 1e-12:
            raise ValueError("dipole_orientation must be a unit 3-vector")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "dipole_orientation", d)
        for i, j in zip(*np.triu_indices(len(pos), k=1)):
            if np.linalg.norm(pos[i] - pos[j]) < COINCIDENT_XI:
                raise ValueError(f"atoms {i + 1} and {j + 1} coincide")

    @property
    def n_atoms(self) -> int:
        return len(self.positions)

    @classmethod
    def collinear(cls, n_atoms: int, spacing: float, alpha: float = np.pi / 2):
        """Atoms on the x axis, dipole at angle ``alpha`` to the chain."""
        pos = np.zeros((n_atoms, 3))
        pos[:, 0] = spacing * np.arange(n_atoms)
        d = np.array([np.cos(alpha), 0.0, np.sin(alpha)])
        return cls(pos, d / np.linalg.norm(d))


@dataclass(frozen=True)
class CouplingMatrices:
    """Dipolar shifts ``f`` and collective rates ``gamma`` (units of gamma0)."""

    f: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        f = np.array(self.f, dtype=float)
        g = np.array(self.gamma, dtype=float)
        if f.shape != g.shape or f.ndim != 2 or f.shape[0] != f.shape[1]:
            raise ValueError("f and gamma must be square matrices of equal size")
        if not (np.array_equal(f, f.T) and np.array_equal(g, g.T)):
            raise ValueError("coupling matrices must be symmetric")
        if np.any(np.diag(f) != 0):
            raise ValueError("f must have a zero diagonal")
        f.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "gamma", g)

    @property
    def n_atoms(self) -> int:
        return self.f.shape[0]


@dataclass(frozen=True)
class ThermalBath:
    nbar: float

    def __post_init__(self):
        if not self.nbar >= 0:
            raise ValueError(f"nbar must be >= 0, got {self.nbar}")


def nbar_from_temperature(temperature: float) -> ThermalBath:
    """Bose-Einstein occupation at the transition; temperature in hbar*omega0/k_B."""
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    with np.errstate(over="ignore"):
        return ThermalBath(float(1.0 / np.expm1(1.0 / temperature)))


def pair_coefficients(xi, cos_alpha, gamma0=1.0):
    """``(f, gamma)`` for a single pair at separation ``xi``; vectorized."""
    xi = np.asarray(xi, dtype=float)
    c2 = np.asarray(cos_alpha, dtype=float) ** 2
    s, c = np.sin(xi), np.cos(xi)
    f = 0.75 * gamma0 * ((1 - 3 * c2) * (s / xi**2 + c / xi**3) - (1 - c2) * c / xi)
    g = 1.5 * gamma0 * ((1 - 3 * c2) * (c / xi**2 - s / xi**3) + (1 - c2) * s / xi)
    return f, g


def compute_couplings(geom: AtomGeometry, gamma0: float = 1.0) -> CouplingMatrices:
    if not gamma0 > 0:
        raise ValueError("gamma0 must be positive")
    n = geom.n_atoms
    f = np.zeros((n, n))
    g = np.eye(n) * gamma0
    for i, j in zip(*np.triu_indices(n, k=1)):
        r = geom.positions[i] - geom.positions[j]
        xi = np.linalg.norm(r)
        cos_a = np.dot(r / xi, geom.dipole_orientation)
        f[i, j], g[i, j] = pair_coefficients(xi, cos_a, gamma0)
        f[j, i], g[j, i] = f[i, j], g[i, j]
    return CouplingMatrices(f, g)


def uniform_couplings(n_atoms: int, f0: float, gamma0: float = 1.0) -> CouplingMatrices:
    """Fully collective limit: every ``gamma_ij = gamma0``, every ``f_ij = f0``."""
    if n_atoms < 1:
        raise ValueError("n_atoms must be >= 1")
    f = np.full((n_atoms, n_atoms), float(f0))
    np.fill_diagonal(f, 0.0)
    return CouplingMatrices(f, np.full((n_atoms, n_atoms), float(gamma0)))


def dipole_hamiltonian(coupling: CouplingMatrices) -> np.ndarray:
    n = coupling.n_atoms
    d = 2**n
    h = np.zeros((d, d), dtype=complex)
    for i in range(n):
        for j in range(n):
            if i != j and coupling.f[i, j] != 0:
                h += coupling.f[i, j] * (embed_site(SIGMA_PLUS, i + 1, n)
                                         @ embed_site(SIGMA_MINUS, j + 1, n))
    return h


class _SiteIndex:
    """Row index pairs that realize sigma^- / sigma^+ on each site."""

    def __init__(self, n_atoms: int):
        idx = np.arange(2**n_atoms)
        self.e_rows, self.g_rows = [], []
        for site in range(1, n_atoms + 1):
            bit = 1 << (n_atoms - site)
            e = idx[(idx & bit) == 0]
            self.e_rows.append(e)
            self.g_rows.append(e + bit)

    def lower(self, coeffs, x):
        """``(sum_j c_j sigma_j^-) @ x``."""
        out = np.zeros_like(x)
        for c, e, g in zip(coeffs, self.e_rows, self.g_rows):
            if c != 0:
                out[g] += c * x[e]
        return out

    def raise_(self, coeffs, x):
        """``(sum_j c_j sigma_j^+) @ x``."""
        out = np.zeros_like(x)
        for c, e, g in zip(coeffs, self.e_rows, self.g_rows):
            if c != 0:
                out[e] += c * x[g]
        return out


class Liouvillian:
    """Generator ``L(rho) = -i[H_d, rho] + D_-(rho) + D_+(rho)``.

    ``mode="dense"`` assembles the explicit superoperator (row-major
    vectorization, ``vec(A X B) = (A kron B^T) vec(X)``) and is limited to
    4 atoms.  ``mode="matrix-free"`` applies the generator directly to a
    ``2^N x 2^N`` array through site index maps, using the eigenbasis of
    ``gamma`` to turn the double jump sum into one sum over channels.
    """

    def __init__(self, coupling: CouplingMatrices, bath: ThermalBath,
                 mode: str = "auto"):
        n = coupling.n_atoms
        if mode == "auto":
            mode = "dense" if n <= DENSE_MAX_ATOMS else "matrix-free"
        if mode not in ("dense", "matrix-free"):
            raise ValueError(f"unknown Liouvillian mode {mode!r}")
        if mode == "dense" and n > DENSE_MAX_ATOMS:
            raise ValueError(
                f"dense Liouvillian needs 16^N entries; N={n} exceeds the limit of "
                f"{DENSE_MAX_ATOMS} atoms, use mode='matrix-free'")
        if n > MATRIX_FREE_MAX_ATOMS:
            raise ValueError(f"N={n} exceeds the supported {MATRIX_FREE_MAX_ATOMS} atoms")
        self.coupling = coupling
        self.bath = bath
        self.mode = mode
        self.n_atoms = n
        self.dim = 2**n
        if mode == "matrix-free":
            self._setup_matrix_free()

    def __repr__(self):
        return (f"Liouvillian(n_atoms={self.n_atoms}, nbar={self.bath.nbar}, "
                f"mode={self.mode!r})")

    @cached_property
    def superoperator(self) -> np.ndarray:
        """Dense ``4^N x 4^N`` matrix built term by term from the double sums."""
        if self.mode != "dense":
            raise ValueError("superoperator is only available in dense mode")
        n, d = self.n_atoms, self.dim
        eye = np.eye(d, dtype=complex)
        h = dipole_hamiltonian(self.coupling)
        s = -1j * (kron(h, eye) - kron(eye, h.T))
        sp = [embed_site(SIGMA_PLUS, i + 1, n) for i in range(n)]
        sm = [embed_site(SIGMA_MINUS, i + 1, n) for i in range(n)]
        nb = self.bath.nbar
        for i in range(n):
            for j in range(n):
                gij = self.coupling.gamma[i, j]
                if gij == 0:
                    continue
                for rate, jump, jump_dag in ((gij * (nb + 1), sm[j], sp[i]),
                                             (gij * nb, sp[j], sm[i])):
                    if rate == 0:
                        continue
                    p = jump_dag @ jump
                    s += rate * (kron(jump, jump_dag.T)
                                 - 0.5 * kron(p, eye) - 0.5 * kron(eye, p.T))
        return s

    def _setup_matrix_free(self):
        n = self.n_atoms
        self._sites = _SiteIndex(n)
        w, v = np.linalg.eigh(self.coupling.gamma)
        keep = np.abs(w) > 1e-14 * max(1.0, np.abs(w).max())
        self._channels = [(w[k], v[:, k]) for k in np.flatnonzero(keep)]
        d = self.dim
        eye = np.eye(d, dtype=complex)
        # sum_ij gamma_ij s_i^+ s_j^-  and  sum_ij gamma_ij s_i^- s_j^+
        k_minus = np.zeros((d, d), dtype=complex)
        k_plus = np.zeros((d, d), dtype=complex)
        h = np.zeros((d, d), dtype=complex)
        for i in range(n):
            e_i = np.eye(n)[i]
            lowered = self._sites.lower(self.coupling.gamma[i], eye)
            k_minus += self._sites.raise_(e_i, lowered)
            raised = self._sites.raise_(self.coupling.gamma[i], eye)
            k_plus += self._sites.lower(e_i, raised)
            if np.any(self.coupling.f[i]):
                h += self._sites.raise_(e_i, self._sites.lower(self.coupling.f[i], eye))
        nb = self.bath.nbar
        self._h_nh = h - 0.5j * ((nb + 1) * k_minus + nb * k_plus)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """``L(rho)`` for a ``2^N x 2^N`` array."""
        rho = np.asarray(rho, dtype=complex)
        if rho.shape != (self.dim, self.dim):
            raise ValueError(f"state shape {rho.shape} does not match dim {self.dim}")
        if self.mode == "dense":
            return (self.superoperator @ rho.reshape(-1)).reshape(self.dim, self.dim)
        out = -1j * (self._h_nh @ rho - rho @ self._h_nh.conj().T)
        nb = self.bath.nbar
        sites = self._sites
        for lam, vec in self._channels:
            # lam * A rho A^dag with A = sum_j v_j s_j^-, likewise for s^+
            a_rho = sites.lower(vec, rho)
            out += (lam * (nb + 1)) * sites.lower(vec, a_rho.conj().T).conj().T
            if nb:
                b_rho = sites.raise_(vec, rho)
                out += (lam * nb) * sites.raise_(vec, b_rho.conj().T).conj().T
        return out

    def apply_vec(self, v: np.ndarray) -> np.ndarray:
        if self.mode == "dense":
            return self.superoperator @ v
        return self.apply(v.reshape(self.dim, self.dim)).reshape(-1)


def liouvillian(coupling: CouplingMatrices, bath: ThermalBath,
                mode: str = "auto") -> Liouvillian:
    return Liouvillian(coupling, bath, mode)


def unitary_pair_evolution(rho0, f: float, t: float) -> np.ndarray:
    """Closed-form two-atom evolution under ``H_d`` alone (no bath).

    Only elements of the upper triangle are propagated; the lower triangle
    is filled in by Hermiticity.  Indices below are 1-based over
    ``|ee>, |eg>, |ge>, |gg>``.
    """
    r = np.asarray(rho0, dtype=complex)
    if r.shape != (4, 4):
        raise ValueError(f"expected a two-atom (4x4) state, got shape {r.shape}")
    c, s = np.cos(f * t), np.sin(f * t)
    c2, s2 = np.cos(2 * f * t), np.sin(2 * f * t)
    p22, p33, p23 = r[1, 1].real, r[2, 2].real, r[1, 2]
    diff, tot = p22 - p33, p22 + p33
    out = np.zeros((4, 4), dtype=complex)
    out[0, 0] = r[0, 0]
    out[0, 1] = r[0, 1] * c + 1j * r[0, 2] * s
    out[0, 2] = r[0, 2] * c + 1j * r[0, 1] * s
    out[0, 3] = r[0, 3]
    out[1, 1] = (tot + diff * c2 - 2 * p23.imag * s2) / 2
    out[1, 2] = p23.real + 1j * (p23.imag * c2 + diff * s2 / 2)
    out[1, 3] = r[1, 3] * c - 1j * r[2, 3] * s
    out[2, 2] = (tot - diff * c2 + 2 * p23.imag * s2) / 2
    out[2, 3] = r[2, 3] * c - 1j * r[1, 3] * s
    out[3, 3] = r[3, 3]
    upper = np.triu(out, 1)
    return np.diag(np.diag(out).real).astype(complex) + upper + upper.conj().T
