"""Thermal generation, protection and collisional harvesting of coherence
in clusters of dipole-coupled two-level atoms."""

__version__ = "0.1.0"

from .coherence import (analytic_pair_coherence, block_report, cubic_fit,
                        l1_coherence, pair_plateau)
from .dipolar import (AtomGeometry, CouplingMatrices, Liouvillian, ThermalBath,
                      compute_couplings, dipole_hamiltonian, liouvillian,
                      nbar_from_temperature, uniform_couplings, unitary_pair_evolution)
from .dynamics import (IntegratorConfig, Trajectory, evolve, steady_state_longtime,
                       steady_state_null)
