"""Prognostic state ``a = (v, h)``, physical parameters and diagnostic relations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .grid import GridMismatchError, NonFiniteFieldError, TorusGrid


@dataclass(frozen=True, eq=False)
class State:
    """Momentum-like variable ``v`` (2 components) and column thickness ``h``.

    Stored as one ``(3, n, n)`` array ``[v1, v2, h]``; ``v`` and ``h`` are views.
    """

    grid: TorusGrid
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.shape != (3, *self.grid.shape):
            raise GridMismatchError(
                f"state array has shape {data.shape}, expected {(3, *self.grid.shape)}"
            )
        if not np.all(np.isfinite(data)):
            raise NonFiniteFieldError("state contains non-finite values")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_fields(cls, grid: TorusGrid, v, h) -> "State":
        v = grid.check(np.asarray(v, dtype=float))
        h = grid.check(np.asarray(h, dtype=float))
        if v.shape != (2, *grid.shape) or h.shape != grid.shape:
            raise GridMismatchError("v must be (2, n, n) and h must be (n, n)")
        return cls(grid, np.concatenate([v, h[None]], axis=0))

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "State":
        return cls(grid, grid.zeros(3))

    @property
    def v(self) -> np.ndarray:
        return self.data[:2]

    @property
    def h(self) -> np.ndarray:
        return self.data[2]

    def copy(self) -> "State":
        return State(self.grid, self.data.copy())

    def scaled(self, factor: float) -> "State":
        return State(self.grid, self.data * factor)

    def __add__(self, other: "State") -> "State":
        _check_same(self, other)
        return State(self.grid, self.data + other.data)

    def __sub__(self, other: "State") -> "State":
        _check_same(self, other)
        return State(self.grid, self.data - other.data)


def _check_same(a: State, b: State) -> None:
    if a.grid != b.grid:
        raise GridMismatchError(f"states live on different grids: {a.grid} vs {b.grid}")


@dataclass(frozen=True, eq=False)
class PhysicalParams:
    """Rossby number, Coriolis parameter, Froude number, viscosities and fields.

    ``topography_b`` and ``rotation_R`` default to zero fields on ``grid``.
    """

    grid: TorusGrid
    epsilon: float = 1.0
    coriolis_f: float = 1.0
    froude: float = 1.0
    nu: float = 0.1
    eta: float = 0.1
    topography_b: Optional[np.ndarray] = field(default=None, repr=False)
    rotation_R: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("epsilon", "froude", "nu", "eta"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be strictly positive, got {value!r}")
        if not math.isfinite(self.coriolis_f):
            raise ValueError(f"coriolis_f must be finite, got {self.coriolis_f!r}")
        b = self.grid.zeros() if self.topography_b is None else np.asarray(self.topography_b, float)
        R = self.grid.zeros(2) if self.rotation_R is None else np.asarray(self.rotation_R, float)
        if b.shape != self.grid.shape:
            raise GridMismatchError(f"topography has shape {b.shape}, grid is {self.grid.shape}")
        if R.shape != (2, *self.grid.shape):
            raise GridMismatchError(f"rotation potential has shape {R.shape}")
        b.setflags(write=False)
        R.setflags(write=False)
        object.__setattr__(self, "topography_b", b)
        object.__setattr__(self, "rotation_R", R)

    @property
    def flat_bottom(self) -> bool:
        return not np.any(self.topography_b)

    @property
    def zero_rotation_potential(self) -> bool:
        return not np.any(self.rotation_R)

    def with_(self, **changes) -> "PhysicalParams":
        return replace(self, **changes)

    def scalars(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "coriolis_f": self.coriolis_f,
            "froude": self.froude,
            "nu": self.nu,
            "eta": self.eta,
        }


def _check_params(state: State, params: PhysicalParams) -> None:
    if state.grid != params.grid:
        raise GridMismatchError("state and parameters live on different grids")


def velocity_array(v: np.ndarray, params: PhysicalParams) -> np.ndarray:
    if params.zero_rotation_potential:
        return v / params.epsilon
    return (v - params.rotation_R) / params.epsilon


def pressure_array(h: np.ndarray, params: PhysicalParams) -> np.ndarray:
    scale = params.epsilon * params.froude
    if params.flat_bottom:
        return h / scale
    return (h - params.topography_b) / scale


def velocity(state: State, params: PhysicalParams) -> np.ndarray:
    """Fluid velocity ``u = (v - R) / epsilon``."""
    _check_params(state, params)
    return velocity_array(state.v, params)


def pressure(state: State, params: PhysicalParams) -> np.ndarray:
    """Pressure ``p = (h - b) / (epsilon * F)``."""
    _check_params(state, params)
    return pressure_array(state.h, params)


def coriolis(u: np.ndarray, f: float) -> np.ndarray:
    """``f z x u = (-f u2, f u1)``."""
    u = np.asarray(u, dtype=float)
    return np.stack([-f * u[1], f * u[0]])


def mass(state: State) -> float:
    """Total mass, the integral of ``h`` over the torus."""
    return float(state.grid.integral(state.h))


def norm12_additive(grid: TorusGrid, data: np.ndarray) -> float:
    """``||v||_{1,2} + ||h||_{1,2}``: the quantity the truncation and tau^R read."""
    return grid.sobolev_norm(data[:2], 1) + grid.sobolev_norm(data[2], 1)


def state_norm(state: State, k: int) -> float:
    """Canonical ``W^{k,2}`` norm of the full triple (components in quadrature)."""
    return state.grid.sobolev_norm(state.data, k)
