"""Observables F(z, x/|x|, y/|y|) and their presets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

# Compact set on which C^0 / Lipschitz bounds of F o phi are quoted:
# |x| <= X_REF, |y| <= Y_REF, large enough for perturbations up to 0.1.
X_REF = 1.1
Y_REF = math.e + 0.1


@dataclass(frozen=True)
class Observable:
    name: str
    func: Callable
    c0_bound: float
    lip_bound: float
    depends_on_z_only: bool = True

    def __call__(self, z, xdir=None, ydir=None) -> float:
        return float(self.func(z, xdir, ydir))

    def of_z(self, z: np.ndarray) -> np.ndarray:
        """Vectorised evaluation for observables of z alone."""
        if not self.depends_on_z_only:
            raise ValueError(f"{self.name} depends on directions")
        return np.asarray(self.func(np.asarray(z, dtype=float), None, None), dtype=float) \
            * np.ones_like(np.asarray(z, dtype=float))

    def check_bound(self, zs) -> bool:
        return all(abs(self(z)) <= self.c0_bound for z in zs)


def _z_bounds(m: int, n: int, power: int):
    zmax = X_REF ** m * Y_REF ** n
    dz = m * X_REF ** (m - 1) * Y_REF ** n + n * X_REF ** m * Y_REF ** (n - 1)
    return zmax ** power, power * zmax ** (power - 1) * dz


def observable(name: str, m: int = 1, n: int = 1) -> Observable:
    """Build a preset observable by name: one, zero, z, z2, ztail."""
    if name == "one":
        return Observable("one", lambda z, x, y: 1.0, 1.0, 0.0)
    if name == "zero":
        return Observable("zero", lambda z, x, y: 0.0, 0.0, 0.0)
    if name == "z":
        c0, lip = _z_bounds(m, n, 1)
        return Observable("z", lambda z, x, y: z, c0, lip)
    if name == "z2":
        c0, lip = _z_bounds(m, n, 2)
        return Observable("z2", lambda z, x, y: z * z, c0, lip)
    if name == "ztail":
        # smooth ramp: 0 below z=1/2, (z-1/2)^2 above
        c0, lip = _z_bounds(m, n, 1)
        return Observable("ztail", lambda z, x, y: np.maximum(np.asarray(z) - 0.5, 0.0) ** 2,
                          c0 ** 2, 2 * c0 * lip)
    raise KeyError(f"unknown observable {name!r}")


OBSERVABLES = ("one", "zero", "z", "z2", "ztail")
