"""Classical and quantum (expectation-value) dynamics of a kicked damped oscillator."""

__version__ = "0.1.0"

from .core_map import EvmState, Params, UnsupportedRegimeError, classical_step, quantum_step, t_matrix
from .lyapunov import classify_bifurcation, fixed_point, largest_lyapunov
from .noise_kernels import NoiseMoments, base_moments, kernel_triple
from .scan import bifurcation_diagram, find_threshold, fit_scaling, sweep
from .state_reconstruction import MomentSet, characteristic_function, density_matrix_grid

__all__ = [
    "EvmState", "MomentSet", "NoiseMoments", "Params", "UnsupportedRegimeError",
    "base_moments", "bifurcation_diagram", "characteristic_function", "classical_step",
    "classify_bifurcation", "density_matrix_grid", "find_threshold", "fit_scaling",
    "fixed_point", "kernel_triple", "largest_lyapunov", "quantum_step", "sweep", "t_matrix",
]
