"""Quantum trajectory simulations of open systems.

Unravels Lindblad master equations into jump (Monte-Carlo wavefunction)
and state-diffusion trajectories, computes photon-counting statistics
and fluorescence spectra, and cross-checks every stochastic estimate
against analytic forms or the deterministic master-equation integrator.
"""
from .core import (
    basis_state,
    coherent_amplitudes,
    destroy,
    expectation,
    normalize,
    number_operator,
    operator,
    state_vector,
    tensor_product,
)
from .diffusion import LocalOscillator, QsdConfig, homodyne_model, qsd_ensemble, qsd_step, wiener_sample
from .ensemble import EnsembleResult, ensemble_average
from .jump import (
    JumpConfig,
    TrajectoryRecord,
    apply_jump,
    jump_probability,
    no_jump_step,
    run_trajectory,
    step_first_order,
    step_fourth_order,
    step_second_order,
    waiting_time_sample,
)
from .lindblad import LindbladModel, effective_hamiltonian, liouvillian_apply, master_evolve, steady_state
from .models import ModelSpec, VSystemParams, driven_tls, v_system
from .photon import DelayCurve, DetectorConfig, classify_periods, delay_function, vsystem_periods
from .spectra import GateConfig, SpectrumCurve, conditional_spectrum, spectrum_estimate

__version__ = "0.1.0"
