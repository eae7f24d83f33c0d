"""Model parameters and the built-in parameter sets.

All rates, detunings and Rabi frequencies are dimensionless, in units of a
reference linewidth Gamma.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError

_RATE_FIELDS = ("Gamma31", "Gamma32", "gamma2", "gamma3", "gamma_phi")


@dataclass(frozen=True)
class ModelParams:
    N: int = 14
    Omega_p: float = 0.1
    Omega_c: float = 0.5
    Delta1: float = 0.0
    Delta2: float = 0.0
    Gamma31: float = 1.0
    Gamma32: float = 1.0
    gamma2: float = 1e-4
    gamma3: float = 1e-4
    gamma_phi: float = 1e-4

    def __post_init__(self):
        if isinstance(self.N, bool) or not isinstance(self.N, (int, np.integer)) or self.N < 1:
            raise InvalidParameterError(f"N must be a positive integer, got {self.N!r}")
        for name in dataclasses.fields(self):
            value = getattr(self, name.name)
            if not np.isfinite(value):
                raise InvalidParameterError(f"{name.name} must be finite, got {value!r}")
        for name in _RATE_FIELDS:
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be non-negative, got {getattr(self, name)!r}")

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def drives_off(self) -> bool:
        return self.Omega_p == 0 and self.Omega_c == 0


def eit_params(N: int = 14) -> ModelParams:
    """EIT comparison set: Omega_p=0.1, Omega_c=0.5, equal decay, 1e-4 dephasing."""
    return ModelParams(N=N)


def sr_params(N: int = 30, symmetric: bool = False) -> ModelParams:
    """Drive-off superradiance set.

    The asymmetric case takes Gamma31 = 5, Gamma32 = 1 (Gamma31 = 5 Gamma32 with
    the 3->2 rate as the unit); ground-state dephasing 0.01 is applied both as
    gamma2 (mean field) and gamma_phi (exact solver).
    """
    return ModelParams(N=N, Omega_p=0.0, Omega_c=0.0, Delta1=0.0, Delta2=0.0,
                       Gamma31=1.0 if symmetric else 5.0, Gamma32=1.0,
                       gamma2=0.01, gamma3=0.0, gamma_phi=0.01)


EIT_EXACT_GRID = (-6.0, 6.0, 201)
EIT_MF_GRID = (-200.0, 200.0, 201)
SR_EPSILON = 0.1
SR_SWEEP = (4, 8, 12, 16, 20, 24, 30)


def uniform_grid(spec=EIT_EXACT_GRID) -> np.ndarray:
    lo, hi, n = spec
    return np.linspace(lo, hi, int(n))
