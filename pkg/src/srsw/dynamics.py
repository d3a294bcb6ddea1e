"""
Tendencies of the viscous rotating shallow water system.

    dv = -f_R (u . grad v) - f z x u - grad p + nu lap v
    dh = -f_R div(h u) + eta lap h

``f_R`` multiplies only the two advective nonlinearities and is 1 for the
untruncated system.  Viscosity carries the dissipative sign throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .grid import GridMismatchError, TorusGrid
from .noise import NoiseBasis
from .state import PhysicalParams, State, norm12_additive, velocity_array

INF = math.inf


class NonFiniteTendencyError(FloatingPointError):
    """A drift term evaluated to NaN/Inf; ``term`` names the offender."""

    def __init__(self, term: str):
        super().__init__(f"non-finite values in the {term} term")
        self.term = term


@dataclass(frozen=True, eq=False)
class Tendency:
    """Time-derivative contributions ``(dv, dh)`` stored as a ``(3, n, n)`` array."""

    grid: TorusGrid
    data: np.ndarray

    @property
    def dv(self) -> np.ndarray:
        return self.data[:2]

    @property
    def dh(self) -> np.ndarray:
        return self.data[2]

    def __add__(self, other: "Tendency") -> "Tendency":
        if other.grid != self.grid:
            raise GridMismatchError("tendencies live on different grids")
        return Tendency(self.grid, self.data + other.data)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.data)))


def _smoothstep(t: float) -> float:
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def truncation_value(x: float, R: float) -> float:
    """Cutoff equal to 1 on [0, R], 0 on [R+1, inf), quintic smoothstep in between."""
    if x < 0 or math.isnan(x):
        raise ValueError(f"truncation argument must be >= 0, got {x!r}")
    if math.isinf(R):
        return 1.0
    if not R > 0:
        raise ValueError(f"truncation level must be positive, got {R!r}")
    if x <= R:
        return 1.0
    if x >= R + 1.0:
        return 0.0
    return 1.0 - _smoothstep(x - R)


def truncation_factor(grid: TorusGrid, data: np.ndarray, R: float) -> float:
    if math.isinf(R):
        return 1.0
    return truncation_value(norm12_additive(grid, data), R)


def _finite(term: str, arr: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteTendencyError(term)
    return arr


def nonlinear_terms(grid: TorusGrid, data: np.ndarray, params: PhysicalParams,
                    data_hat: Optional[np.ndarray] = None) -> np.ndarray:
    """Dealiased ``(u . grad v, div(h u))`` stacked as ``(3, n, n)`` (no sign, no f_R)."""
    if data_hat is None:
        data_hat = grid.fft(data)
    u = velocity_array(data[:2], params)
    gv = np.stack(
        [grid.ifft(grid.partial_hat(data_hat[:2], 1, 0)), grid.ifft(grid.partial_hat(data_hat[:2], 0, 1))],
        axis=-3,
    )  # (2 comps, 2 derivs, n, n)
    out = np.empty_like(data)
    out[:2] = u[0] * gv[:, 0] + u[1] * gv[:, 1]
    fluxh = grid.dealias_hat(grid.fft(data[2] * u))
    adv_hat = grid.dealias_hat(grid.fft(out[:2]))
    out[:2] = grid.ifft(adv_hat)
    out[2] = grid.ifft(grid.partial_hat(fluxh[0], 1, 0) + grid.partial_hat(fluxh[1], 0, 1))
    return out


def linear_terms(grid: TorusGrid, data: np.ndarray, params: PhysicalParams,
                 data_hat: Optional[np.ndarray] = None, viscous: bool = True) -> np.ndarray:
    """``(-f z x u - grad p + nu lap v, eta lap h)``; viscosity optional for split schemes."""
    if data_hat is None:
        data_hat = grid.fft(data)
    u = velocity_array(data[:2], params)
    f = params.coriolis_f
    out = np.empty_like(data)
    gp_scale = 1.0 / (params.epsilon * params.froude)
    hb_hat = data_hat[2] if params.flat_bottom else data_hat[2] - grid.fft(params.topography_b)
    gp = np.stack([grid.ifft(grid.partial_hat(hb_hat, 1, 0)), grid.ifft(grid.partial_hat(hb_hat, 0, 1))])
    out[0] = f * u[1] - gp_scale * gp[0]
    out[1] = -f * u[0] - gp_scale * gp[1]
    _finite("coriolis/pressure_gradient", out[:2])
    if viscous:
        lap = grid.ifft(-grid.ksq * data_hat)
        out[:2] += params.nu * lap[:2]
        out[2] = params.eta * lap[2]
        _finite("viscosity", out)
    else:
        out[2] = 0.0
    return out


def drift_array(grid: TorusGrid, data: np.ndarray, params: PhysicalParams, factor: float = 1.0,
                viscous: bool = True) -> np.ndarray:
    """Deterministic drift with the advective terms scaled by ``factor``."""
    data_hat = grid.fft(data)
    out = linear_terms(grid, data, params, data_hat, viscous=viscous)
    if factor != 0.0:
        nl = _finite("advection/mass_flux", nonlinear_terms(grid, data, params, data_hat))
        out -= factor * nl
    return out


def _check(state: State, params: PhysicalParams) -> None:
    if state.grid != params.grid:
        raise GridMismatchError("state and parameters live on different grids")


def drift_deterministic(state: State, params: PhysicalParams) -> Tendency:
    _check(state, params)
    return Tendency(state.grid, drift_array(state.grid, state.data, params, 1.0))


def drift_truncated(state: State, params: PhysicalParams, R: float) -> Tendency:
    """As :func:`drift_deterministic`, advective terms scaled by ``f_R(||v||_{1,2}+||h||_{1,2})``."""
    _check(state, params)
    if not R > 0:
        raise ValueError(f"truncation level must be positive, got {R!r}")
    factor = truncation_factor(state.grid, state.data, R)
    return Tendency(state.grid, drift_array(state.grid, state.data, params, factor))


def ito_rhs(state: State, params: PhysicalParams, basis: NoiseBasis, R: float = INF) -> Tendency:
    """Truncated (or full, ``R = inf``) drift plus the Ito correction of the noise."""
    drift = drift_truncated(state, params, R)
    if basis.grid != state.grid:
        raise GridMismatchError("state and noise basis live on different grids")
    _, corr = basis.apply_with_correction(state.data)
    return Tendency(state.grid, drift.data + corr)


@dataclass
class L2BoundReport:
    """Empirical constants for the truncated-nonlinearity L2 bounds."""

    R: float
    ratio_u: float
    ratio_h: float
    samples: int
    resolution: int
    lhs_u: np.ndarray = field(repr=False)
    lhs_h: np.ndarray = field(repr=False)

    def as_dict(self) -> dict:
        return {"R": self.R, "ratio_u": self.ratio_u, "ratio_h": self.ratio_h,
                "samples": self.samples, "n": self.resolution}


def nonlinear_l2_bound_check(states: Iterable[State], params: PhysicalParams, R: float) -> L2BoundReport:
    """Sup over samples of ``f_R^2 ||u.grad v||^2 / (||v||_{2,2}^2 + 1)`` and the flux analogue.

    The second ratio uses ``f_R^2 ||div(h u)||^2 / (||v||_{2,2}^2 + ||h||_{2,2}^2 + 1)``.
    """
    lhs_u, lhs_h, ru, rh = [], [], [], []
    grid = params.grid
    for st in states:
        _check(st, params)
        fr = truncation_factor(grid, st.data, R)
        if fr == 0.0:
            lu = lh = 0.0
        else:
            nl = nonlinear_terms(grid, st.data, params)
            lu = fr * fr * grid.inner_product(nl[:2], nl[:2])
            lh = fr * fr * grid.inner_product(nl[2], nl[2])
        v22 = grid.sobolev_norm(st.v, 2) ** 2
        h22 = grid.sobolev_norm(st.h, 2) ** 2
        lhs_u.append(lu)
        lhs_h.append(lh)
        ru.append(lu / (v22 + 1.0))
        rh.append(lh / (v22 + h22 + 1.0))
    return L2BoundReport(
        R=R,
        ratio_u=float(max(ru, default=0.0)),
        ratio_h=float(max(rh, default=0.0)),
        samples=len(ru),
        resolution=grid.n,
        lhs_u=np.array(lhs_u),
        lhs_h=np.array(lhs_h),
    )
