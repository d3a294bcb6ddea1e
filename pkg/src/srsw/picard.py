"""
Picard approximating sequence for the truncated system.

Iterate ``n`` solves the linear SPDE obtained by freezing the advective
nonlinearities at iterate ``n - 1``:

    da^n = [L a^n - f_R(a^{n-1}) N(a^{n-1}) + 1/2 sum G_i^2 a^n] dt - sum G_i a^n dW_i

where ``L`` collects Coriolis, pressure and viscosity and ``N`` the two
advective terms.  All iterates share one noise path and the Euler-Maruyama
time grid, with the frozen forcing held at its left-endpoint value.  Since the
update reuses the direct stepper's arithmetic, the discrete fixed point is the
direct truncated trajectory itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dynamics import nonlinear_terms, truncation_factor
from .grid import TorusGrid
from .io import write_csv
from .noise import NoiseBasis, NoisePath
from .state import PhysicalParams, State
from .stepper import IntegrationConfig, TrajectoryRecord, _Recorder, integrate, run_hash

PICARD_CSV_COLUMNS = ("n", "sup_l2_distance", "norm_T22", "frac_norm")


class TimeGridMismatchError(ValueError):
    """The previous iterate is not sampled on the time grid of the new run."""


@dataclass
class IterateRecord:
    index: int
    record: TrajectoryRecord = field(repr=False)
    distance: float
    norm_T22: float
    frac_norm: float


@dataclass
class PicardResult:
    iterates: list
    converged: bool
    limit: TrajectoryRecord = field(repr=False)
    direct: Optional[TrajectoryRecord] = field(default=None, repr=False)
    residual_vs_direct: Optional[float] = None
    tol: float = 0.0

    @property
    def distances(self) -> np.ndarray:
        return np.array([it.distance for it in self.iterates])

    def contraction_ratios(self) -> np.ndarray:
        d = self.distances
        return d[1:] / d[:-1] if d.size > 1 else np.array([])

    def to_csv(self, path: Path | str) -> None:
        write_csv(path, PICARD_CSV_COLUMNS,
                  ((it.index, it.distance, it.norm_T22, it.frac_norm) for it in self.iterates))

    def summary(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": len(self.iterates),
            "tol": self.tol,
            "distances": self.distances.tolist(),
            "residual_vs_direct": self.residual_vs_direct,
        }


def constant_record(a0: State, config: IntegrationConfig, seed: Optional[int] = None) -> TrajectoryRecord:
    """Iterate zero: the initial datum held fixed on every step of the time grid."""
    cfg = config.with_(record_every=1)
    rec = _Recorder(a0.grid, cfg)
    for j in range(cfg.steps + 1):
        rec.add(j * cfg.dt, a0.data, j)
    return rec.build("constant", seed, "", False, cfg.steps * cfg.dt, None)


def _check_time_grid(prev: TrajectoryRecord, config: IntegrationConfig) -> None:
    steps = config.steps
    expected = np.arange(steps + 1) * config.dt
    st = prev.state_times
    if st.size != steps + 1 or not np.allclose(st, expected, rtol=0, atol=1e-9 * max(config.dt, 1.0)):
        raise TimeGridMismatchError(
            f"previous iterate has {st.size} stored states, the run needs {steps + 1} on dt={config.dt!r}"
        )


def picard_step(prev: TrajectoryRecord, a0: State, path: NoisePath, params: PhysicalParams,
                basis: NoiseBasis, config: IntegrationConfig, forcing_scale: float = 1.0) -> TrajectoryRecord:
    """Solve the linear SPDE driven by the nonlinearity frozen along ``prev``."""
    if config.scheme != "em_ito":
        raise ValueError("the Picard iteration uses the em_ito scheme")
    config = config.with_(record_every=1)
    _check_time_grid(prev, config)
    grid = a0.grid
    states = prev.states
    R = config.R

    def frozen(j: int):
        data = states[j]
        factor = truncation_factor(grid, data, R) * forcing_scale
        if factor == 0.0:
            return 0.0, None
        return factor, nonlinear_terms(grid, data, params)

    return integrate(a0, params, basis, config, path=path, frozen=frozen)


def sup_l2_distance(grid: TorusGrid, a: TrajectoryRecord, b: TrajectoryRecord) -> float:
    """``sup_t ||a_t - b_t||_{L^2}`` over the stored states of two records on one time grid."""
    if a.states.shape != b.states.shape:
        raise TimeGridMismatchError(f"records hold {a.states.shape} vs {b.states.shape} states")
    diff = a.states - b.states
    per_t = np.sum(diff * diff, axis=(1, 2, 3)) * grid.cell_area
    return float(math.sqrt(np.max(per_t)))


def frac_sobolev_norm(traj: TrajectoryRecord, alpha: float, p: float) -> float:
    """p-th power of the ``W^{alpha,p}(0, T; L^2)`` norm on the stored states.

    ``int ||a_t||^p dt + int int ||a_t - a_s||^p / |t - s|^{1 + alpha p} ds dt``
    with trapezoid weights in each time variable; the diagonal is omitted.
    """
    if not (p > 2 and math.isfinite(p)):
        raise ValueError(f"p must lie in (2, inf), got {p!r}")
    if not (0 <= alpha < 0.5):
        raise ValueError(f"alpha must lie in [0, 1/2), got {alpha!r}")
    t = np.asarray(traj.state_times, dtype=float)
    if t.size < 3:
        raise ValueError("at least three stored time samples are required")
    dts = np.diff(t)
    if not np.allclose(dts, dts[0], rtol=1e-9):
        raise ValueError("stored states must be at uniform times")
    grid = traj.grid
    flat = traj.states.reshape(t.size, -1)
    w = np.full(t.size, dts[0])
    w[0] = w[-1] = 0.5 * dts[0]
    sq = np.sum(flat * flat, axis=1) * grid.cell_area
    single = float(np.sum(w * sq ** (p / 2)))
    gram = flat @ flat.T * grid.cell_area
    dist_sq = np.maximum(sq[:, None] + sq[None, :] - 2 * gram, 0.0)
    gap = np.abs(t[:, None] - t[None, :])
    np.fill_diagonal(gap, 1.0)
    kernel = dist_sq ** (p / 2) / gap ** (1 + alpha * p)
    np.fill_diagonal(kernel, 0.0)
    double = float(w @ kernel @ w)
    return single + double


def picard_solve(a0: State, path: NoisePath, params: PhysicalParams, basis: NoiseBasis,
                 config: IntegrationConfig, tol: float = 1e-8, max_iter: int = 20,
                 alpha: float = 0.25, p: float = 4.0, compare_direct: bool = True) -> PicardResult:
    """Iterate from the constant-in-time datum until the sup-L2 step is below ``tol``."""
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol!r}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter!r}")
    config = config.with_(record_every=1)
    chash = run_hash(params, basis, config)
    prev = constant_record(a0, config, path.seed)
    iterates: list[IterateRecord] = []
    converged = False
    for n in range(1, max_iter + 1):
        cur = picard_step(prev, a0, path, params, basis, config)
        cur.config_hash = chash
        dist = sup_l2_distance(a0.grid, cur, prev) if not cur.blown_up else math.inf
        iterates.append(IterateRecord(n, cur, dist, float(cur.t22[-1]),
                                      frac_sobolev_norm(cur, alpha, p) if cur.states.shape[0] >= 3 else math.nan))
        prev = cur
        if cur.blown_up:
            break
        if dist < tol:
            converged = True
            break
    result = PicardResult(iterates, converged, prev, tol=tol)
    if compare_direct:
        direct = integrate(a0, params, basis, config, path=path)
        result.direct = direct
        if not direct.blown_up and not prev.blown_up:
            result.residual_vs_direct = sup_l2_distance(a0.grid, prev, direct)
    return result
