from .graphmf_py import (
    Scenario,
    binomial_inverse_moment,
    degree_tail_threshold,
    kernel_names,
)

__all__ = [
    "Scenario",
    "binomial_inverse_moment",
    "degree_tail_threshold",
    "kernel_names",
]
