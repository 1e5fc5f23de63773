import numpy as np
import pytest

from thermocoh.coherence import analytic_pair_coherence, l1_coherence, pair_plateau
from thermocoh.dipolar import AtomGeometry, Liouvillian, ThermalBath, compute_couplings, \
    uniform_couplings
from thermocoh.dynamics import (ConvergenceError, DegenerateSteadyStateError, IntegrationError,
                                IntegratorConfig, evolve, integrate, residual_norm,
                                steady_state_longtime, steady_state_null)
from thermocoh.qlinalg import basis_state, ground_state, random_density_matrix


class ZeroGenerator:
    dim = 4

    def apply_vec(self, v):
        return np.zeros_like(v)

    def apply(self, rho):
        return np.zeros_like(rho)


def random_coupling(rng, n):
    while True:
        pos = rng.normal(scale=0.6, size=(n, 3))
        try:
            return compute_couplings(AtomGeometry(pos))
        except ValueError:
            continue


def test_zero_generator_keeps_state(rng):
    rho = random_density_matrix(4, rng)
    tr = evolve(ZeroGenerator(), rho, np.linspace(0, 3, 7))
    assert all(np.array_equal(s, rho) for s in tr.states)


def test_single_atom_decay_oracle():
    # d rho_ee/dt = -gamma0 rho_ee
    L = Liouvillian(uniform_couplings(1, 0.0), ThermalBath(0.0))
    times = np.linspace(0, 3, 13)
    tr = evolve(L, np.diag([1.0, 0.0]), times, probes={"pe": lambda r: r[0, 0].real})
    assert tr.states is None
    assert np.abs(tr.observables["pe"] - np.exp(-times)).max() < 1e-8
    assert tr.observables["pe"][4] == pytest.approx(np.exp(-1), abs=1e-9)


def test_integrate_scalar_oscillator():
    # y'' = -y as a complex first-order system
    times = np.linspace(0, 10, 11)
    out = []
    integrate(lambda t, y: np.array([y[1], -y[0]]), [1.0, 0.0], times,
              IntegratorConfig(rtol=1e-10, atol=1e-12), record=lambda t, y: out.append(y[0].real))
    assert np.abs(np.array(out) - np.cos(times)).max() < 1e-8


def test_integrate_reports_underflow():
    with pytest.raises(IntegrationError, match="at t="):
        integrate(lambda t, y: 1.0 / (1.0 - t) ** 3 * np.ones_like(y), [1.0], [0.0, 2.0])


def test_evolve_input_checks():
    L = Liouvillian(uniform_couplings(2, 0.0), ThermalBath(1.0))
    with pytest.raises(ValueError):
        evolve(L, np.eye(2) / 2, [0, 1])
    with pytest.raises(ValueError):
        evolve(L, ground_state(2), [1, 0.5])
    with pytest.raises(ValueError):
        evolve(L, ground_state(2), [-1, 0.5])


@pytest.mark.parametrize("f0", [0.0, 1.0, 100.0])
def test_pair_evolution_matches_analytic_coherence(f0):
    times = np.linspace(0, 5, 51)
    L = Liouvillian(uniform_couplings(2, f0), ThermalBath(10.0))
    tr = evolve(L, ground_state(2), times, probes={"c": l1_coherence})
    assert np.abs(tr.observables["c"] - analytic_pair_coherence(10.0, times)).max() <= 1e-6


def test_trajectory_stays_physical(rng):
    L = Liouvillian(random_coupling(rng, 3), ThermalBath(2.0))
    tr = evolve(L, random_density_matrix(8, rng), np.linspace(0, 4, 41))
    for rho in tr.states:
        assert abs(np.trace(rho) - 1) < 1e-8
        assert np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() >= -1e-8


def test_tolerance_halving():
    L = Liouvillian(uniform_couplings(3, 1.0), ThermalBath(10.0))
    times = np.linspace(0, 2, 21)
    coarse, fine = (IntegratorConfig(rtol=r, atol=a) for r, a in ((1e-6, 1e-8), (5e-7, 5e-9)))
    c1 = evolve(L, ground_state(3), times, coarse, probes={"c": l1_coherence}).observables["c"]
    c2 = evolve(L, ground_state(3), times, fine, probes={"c": l1_coherence}).observables["c"]
    assert np.abs(c1 - c2).max() < 1e-6


def test_single_atom_steady_state():
    for nbar in (0.0, 0.3, 4.0):
        L = Liouvillian(uniform_couplings(1, 0.0), ThermalBath(nbar), "dense")
        rho = steady_state_null(L)
        assert np.allclose(rho, np.diag([nbar / (2 * nbar + 1), (nbar + 1) / (2 * nbar + 1)]),
                           atol=1e-12)


@pytest.mark.parametrize("f0", [0.0, 1.0, 100.0])
def test_pair_plateau_null_space(f0):
    L = Liouvillian(uniform_couplings(2, f0), ThermalBath(10.0), "dense")
    rho = steady_state_null(L, ground_state(2))
    assert l1_coherence(rho) == pytest.approx(110 / 331, abs=1e-10)
    assert residual_norm(L, rho) <= 1e-10


def test_vacuum_steady_state_is_ground():
    # partially collective pair: the dark sector decays too
    coupling = compute_couplings(AtomGeometry.collinear(2, 0.5))
    L = Liouvillian(coupling, ThermalBath(0.0), "dense")
    assert np.allclose(steady_state_null(L), basis_state(2, "gg"), atol=1e-12)


def test_collective_pair_degenerate():
    L = Liouvillian(uniform_couplings(2, 1.0), ThermalBath(0.0), "dense")
    with pytest.raises(DegenerateSteadyStateError) as info:
        steady_state_null(L)
    assert info.value.dim == 2
    # with a start state the projection is the long-time limit
    assert np.allclose(steady_state_null(L, ground_state(2)), ground_state(2), atol=1e-12)
    singlet = np.array([0, 1, -1, 0]) / np.sqrt(2)
    dark = np.outer(singlet, singlet)
    assert np.allclose(steady_state_null(L, dark), dark, atol=1e-12)


@pytest.mark.parametrize("n", [2, 3])
def test_longtime_matches_null(rng, n):
    for _ in range(2):
        coupling = random_coupling(rng, n)
        L = Liouvillian(coupling, ThermalBath(rng.uniform(0.2, 3)), "dense")
        rho0 = random_density_matrix(2**n, rng)
        null = steady_state_null(L)
        long, t = steady_state_longtime(L, rho0, conv_tol=1e-9)
        assert np.abs(long - null).max() <= 1e-7
        assert t > 0


def test_longtime_plateau_timescale():
    L = Liouvillian(uniform_couplings(2, 0.0), ThermalBath(10.0))
    times = np.linspace(0, 0.5, 3)
    c = evolve(L, ground_state(2), times, probes={"c": l1_coherence}).observables["c"]
    assert abs(c[-1] - pair_plateau(10.0)) < 1e-4


def test_longtime_idempotent():
    L = Liouvillian(uniform_couplings(3, 1.0), ThermalBath(10.0))
    rho, t = steady_state_longtime(L, ground_state(3), conv_tol=1e-8)
    again, t2 = steady_state_longtime(L, rho, conv_tol=1e-8)
    assert t2 == 0.0
    assert np.array_equal(again, rho)


def test_longtime_horizon():
    L = Liouvillian(uniform_couplings(2, 1.0), ThermalBath(10.0))
    with pytest.raises(ConvergenceError):
        steady_state_longtime(L, ground_state(2), conv_tol=1e-12, horizon=0.1)
    with pytest.raises(ValueError):
        steady_state_longtime(L, ground_state(2), conv_tol=0.0)


def test_integrator_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(rtol=0)
    with pytest.raises(ValueError):
        IntegratorConfig(max_step=-1)
