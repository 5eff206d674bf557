"""Sparse inverse-problem kit: entropy-regularized weighted shrinkage-thresholding."""

from sik.errors import DivergenceError, ResourceLimitError
from sik.operators import (
    LinearOperator,
    SpectralBound,
    compose,
    estimate_spectral_bound,
    identity,
    lipschitz_constant,
    make_blur_operator,
    make_haar_operator,
    materialize,
    matrix_operator,
)
from sik.solvers import (
    IterationTrace,
    Problem,
    SolverConfig,
    Strategy,
    baseline_weights,
    entropy_weights,
    evaluate_cost,
    iwsta_step,
    soft_threshold,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "DivergenceError",
    "IterationTrace",
    "LinearOperator",
    "Problem",
    "ResourceLimitError",
    "SolverConfig",
    "SpectralBound",
    "Strategy",
    "baseline_weights",
    "compose",
    "entropy_weights",
    "estimate_spectral_bound",
    "evaluate_cost",
    "identity",
    "iwsta_step",
    "lipschitz_constant",
    "make_blur_operator",
    "make_haar_operator",
    "materialize",
    "matrix_operator",
    "soft_threshold",
    "solve",
]
