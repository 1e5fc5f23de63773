"""Operator algebra on multi-qubit Hilbert spaces.

Basis convention used throughout the package: each two-level atom has
``|e> = index 0`` and ``|g> = index 1``; site 1 is the most significant
qubit.  For ``N`` atoms index 0 is ``|e...e>`` and index ``2**N - 1`` is
``|g...g>``.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np
import scipy.linalg

SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)   # |e><g|
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)  # |g><e|
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
POSITIVITY_FLOOR = -1e-10


class InvalidStateError(ValueError):
    """Raised when a matrix fails the density-matrix checks."""


def kron(a, b):
    """Kronecker product ``a (x) b``."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def kron_all(ops: Iterable[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


def embed_site(op, site: int, n_atoms: int) -> np.ndarray:
    """Place a 2x2 operator on ``site`` (1-based) of an ``n_atoms`` register."""
    op = np.asarray(op, dtype=complex)
    if op.shape != (2, 2):
        raise ValueError(f"expected a 2x2 operator, got shape {op.shape}")
    if not 1 <= site <= n_atoms:
        raise ValueError(f"site {site} out of range 1..{n_atoms}")
    ops = [IDENTITY2] * n_atoms
    ops[site - 1] = op
    return kron_all(ops)


def collective(op, n_atoms: int) -> np.ndarray:
    """Sum of ``op`` embedded on every site."""
    return sum(embed_site(op, i, n_atoms) for i in range(1, n_atoms + 1))


def n_qubits(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def partial_trace(rho, keep_sites) -> np.ndarray:
    """Reduced state on ``keep_sites`` (1-based), sites kept in ascending order."""
    rho = np.asarray(rho, dtype=complex)
    n = n_qubits(rho.shape[0])
    keep = sorted(set(keep_sites))
    if not keep:
        raise ValueError("keep_sites must be nonempty")
    if keep[0] < 1 or keep[-1] > n:
        raise ValueError(f"keep_sites {keep} not within 1..{n}")
    traced = [s for s in range(1, n + 1) if s not in keep]
    t = rho.reshape((2,) * (2 * n))
    # trace out from the highest site down so that axis numbers stay valid
    for s in reversed(traced):
        cur = t.ndim // 2
        t = np.trace(t, axis1=s - 1, axis2=cur + s - 1)
    d = 2 ** len(keep)
    return t.reshape(d, d)


def matrix_exp(a, scale: complex = 1.0) -> np.ndarray:
    """``exp(scale * a)``.

    Hermitian ``a`` goes through an eigendecomposition, which keeps
    ``exp(-i t H)`` unitary to machine precision; everything else uses
    scipy's scaling-and-squaring Pade approximant.
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix_exp needs a square matrix, got shape {a.shape}")
    if np.allclose(a, a.conj().T, rtol=0.0, atol=1e-14 * max(1.0, np.abs(a).max())):
        w, v = np.linalg.eigh((a + a.conj().T) / 2)
        return (v * np.exp(scale * w)) @ v.conj().T
    return scipy.linalg.expm(scale * a)


def dagger(a) -> np.ndarray:
    return np.asarray(a).conj().T


def hermitize(a) -> np.ndarray:
    a = np.asarray(a)
    return (a + a.conj().T) / 2


def check_density_matrix(rho, *, trace_tol=TRACE_TOL, floor=POSITIVITY_FLOOR,
                         herm_tol=HERMITIAN_TOL) -> None:
    """Raise :class:`InvalidStateError` unless ``rho`` is a valid state."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidStateError(f"not a square matrix: shape {rho.shape}")
    n_qubits(rho.shape[0])
    dev = np.abs(rho - rho.conj().T).max()
    if dev > herm_tol:
        raise InvalidStateError(f"not Hermitian (max deviation {dev:.3g})")
    tr = np.trace(rho)
    if abs(tr - 1) > trace_tol:
        raise InvalidStateError(f"trace {tr.real:.12g} differs from 1")
    lo = np.linalg.eigvalsh(hermitize(rho)).min()
    if lo < floor:
        raise InvalidStateError(f"negative eigenvalue {lo:.3g}")


def density_matrix(m, *, check=True) -> np.ndarray:
    """Hermitized copy of ``m`` as a complex array, validated by default."""
    rho = hermitize(np.array(m, dtype=complex))
    if check:
        check_density_matrix(rho)
    return rho


def pure_state(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def basis_state(n_atoms: int, label: str) -> np.ndarray:
    """Projector on a product state written as e.g. ``"gg"`` or ``"eg"``."""
    if len(label) != n_atoms or set(label) - {"e", "g"}:
        raise ValueError(f"bad basis label {label!r} for {n_atoms} atoms")
    idx = int("".join("0" if c == "e" else "1" for c in label), 2)
    rho = np.zeros((2**n_atoms, 2**n_atoms), dtype=complex)
    rho[idx, idx] = 1
    return rho


def ground_state(n_atoms: int) -> np.ndarray:
    return basis_state(n_atoms, "g" * n_atoms)


def random_density_matrix(dim: int, rng=None, rank: int | None = None) -> np.ndarray:
    """Random state from a Ginibre ensemble (full rank unless ``rank`` given)."""
    rng = np.random.default_rng(rng)
    k = dim if rank is None else rank
    g = rng.normal(size=(dim, k)) + 1j * rng.normal(size=(dim, k))
    rho = g @ g.conj().T
    return hermitize(rho / np.trace(rho).real)


def excitation_numbers(n_atoms: int) -> np.ndarray:
    """Number of excited atoms for every basis index."""
    idx = np.arange(2**n_atoms)
    ground_bits = np.array([bin(i).count("1") for i in idx])
    return n_atoms - ground_bits
