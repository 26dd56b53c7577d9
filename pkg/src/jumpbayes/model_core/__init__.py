"""Parameter types and regularity checks for unit jump diffusions."""
from .types import (
    DomainSpec, DriftSpec, DriftField, LevyMixture, JumpDiffusionModel,
    eval_drift, multi_indices, laplacian_eigenvalues, sine_basis,
    truncated_gaussian_kernel, numeric_jacobian,
)
from .fields import (
    SmoothField, apply_generator, jump_integral, constant_field, squared_norm_field,
    coordinate_field, tanh_ridge, default_test_fields,
)
from .conditions import (
    ConditionReport, GradientConditionReport, LampertiReport, Violation,
    check_conditions, check_conditions_gradient_nojump, check_lamperti,
    lamperti_residuals,
)


def eval_levy_density(levy, z):
    """Levy density ``lambda * sum_i w_i phi_{r,tau_i}(z - z_i)``; zero outside the core."""
    return levy.density(z)


__all__ = [
    "DomainSpec", "DriftSpec", "DriftField", "LevyMixture", "JumpDiffusionModel",
    "eval_drift", "eval_levy_density", "multi_indices", "laplacian_eigenvalues",
    "sine_basis", "truncated_gaussian_kernel", "numeric_jacobian",
    "SmoothField", "apply_generator", "jump_integral", "constant_field",
    "squared_norm_field", "coordinate_field", "tanh_ridge", "default_test_fields",
    "ConditionReport", "GradientConditionReport", "LampertiReport", "Violation",
    "check_conditions", "check_conditions_gradient_nojump", "check_lamperti",
    "lamperti_residuals",
]
