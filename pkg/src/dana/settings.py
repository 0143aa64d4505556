"""Numeric tolerances, bundled in one record so callers can override them."""

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class NumericSettings:
    symmetry_tol: float = 1e-12
    laplacian_tol: float = 1e-10
    psd_tol: float = 1e-9
    conservation_tol: float = 1e-9
    lmi_feas_tol: float = 1e-7
    bisection_tol: float = 1e-3
    projection_sweeps: int = 5000
    bisection_steps: int = 25
    projection_residual: float = 1e-6
    projection_margin: float = 1e-2
    jacobi_tol: float = 1e-14
    jacobi_max_sweeps: int = 100

    def with_(self, **changes):
        return replace(self, **changes)


DEFAULT_SETTINGS = NumericSettings()
