"""Two-photon pulse scattering on a chirally coupled two-level system.

Virtual-cavity cascades, master-equation dynamics, output-mode analysis and
the scenarios built on them.
"""
from .analysis import (ModeDecomposition, TakagiDecomposition, eigenmodes, fock_populations,
                       relation_check, state_fidelity, takagi)
from .cascade import (CascadeSystem, CorrelationMatrix, InvariantViolation, TwoPhotonAmplitude,
                      evolve, first_order_correlation, two_photon_amplitude)
from .modes import (CouplingFunction, GaussianParams, TemporalMode, TimeGrid,
                    absorption_coupling, emission_coupling, gaussian_mode, time_reverse)
from .quantum import DensityMatrix, HilbertSpace, KetState, Operator
from .scenarios import ScenarioConfig, SweepResult, run_scenario

__version__ = "0.1.0"

__all__ = [
    "CascadeSystem", "CorrelationMatrix", "CouplingFunction", "DensityMatrix",
    "GaussianParams", "HilbertSpace", "InvariantViolation", "KetState", "ModeDecomposition",
    "Operator", "ScenarioConfig", "SweepResult", "TakagiDecomposition", "TemporalMode",
    "TimeGrid", "TwoPhotonAmplitude", "absorption_coupling", "eigenmodes", "emission_coupling",
    "evolve", "first_order_correlation", "fock_populations", "gaussian_mode", "relation_check",
    "run_scenario", "state_fidelity", "takagi", "time_reverse", "two_photon_amplitude",
]
