"""
Explicit time integration of the Ito and Stratonovich forms.

Sign convention: the noise enters as ``- sum_i G_i(a) dW_i`` so that the Ito
drift carries ``+ 1/2 sum_i G_i^2 a``.

Two schemes are provided:

* ``em_ito``:     a+ = a + dt (D_R(a) + 1/2 sum G_i^2 a) - sum G_i(a) dW_i
* ``heun_strat``: predictor/corrector on the Stratonovich form, no correction

With ``viscous="integrating_factor"`` the Laplacian is integrated exactly by
the multiplier ``exp(-gamma |k|^2 dt)`` (Lawson form for Heun).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .dynamics import (
    INF,
    NonFiniteTendencyError,
    drift_array,
    linear_terms,
    nonlinear_terms,
    truncation_factor,
    truncation_value,
)
from .grid import GridMismatchError, TorusGrid
from .io import config_hash as _hash, save_snapshot, write_csv, write_json
from .noise import NoiseBasis, NoisePath, sample_path
from .state import PhysicalParams, State, norm12_additive, velocity_array

SCHEMES = ("em_ito", "heun_strat")
VISCOUS_MODES = ("explicit", "integrating_factor")
CSV_COLUMNS = ("t", "norm12", "norm22", "t22", "fR_value", "mass")


class StabilityError(ValueError):
    """The requested step violates the explicit stability rule."""

    def __init__(self, constraint: str, dt: float, limit: float):
        super().__init__(f"dt={dt!r} violates the {constraint} constraint (limit {limit!r})")
        self.constraint = constraint
        self.dt = dt
        self.limit = limit


@dataclass(frozen=True)
class IntegrationConfig:
    scheme: str = "em_ito"
    T: float = 1.0
    dt: float = 1e-3
    R: float = INF
    monitor_R: tuple = ()
    monitor_M: tuple = ()
    ceiling: float = 1e6
    record_every: int = 1
    viscous: str = "explicit"
    check_stability: bool = True

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.viscous not in VISCOUS_MODES:
            raise ValueError(f"viscous must be one of {VISCOUS_MODES}, got {self.viscous!r}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not self.T >= 0:
            raise ValueError(f"T must be >= 0, got {self.T!r}")
        if not self.R > 0:
            raise ValueError(f"R must be positive or inf, got {self.R!r}")
        if not self.ceiling > 0:
            raise ValueError(f"ceiling must be positive, got {self.ceiling!r}")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValueError(f"record_every must be a positive integer, got {self.record_every!r}")
        object.__setattr__(self, "monitor_R", tuple(float(r) for r in self.monitor_R))
        object.__setattr__(self, "monitor_M", tuple(float(m) for m in self.monitor_M))
        self.steps  # validates T / dt

    @property
    def steps(self) -> int:
        ratio = self.T / self.dt
        steps = int(round(ratio))
        if abs(ratio - steps) > 1e-9 * max(1.0, ratio):
            raise ValueError(f"T={self.T!r} is not an integer multiple of dt={self.dt!r}")
        return steps

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def with_(self, **changes) -> "IntegrationConfig":
        return IntegrationConfig(**{**self.as_dict(), **changes})


# ------------------------------------------------------------------ stability


def stability_limits(params: PhysicalParams, basis: NoiseBasis, data: np.ndarray,
                     viscous: str = "explicit") -> dict[str, float]:
    """Largest admissible dt for each constraint of the explicit rule.

    The advective speed includes the gravity-wave speed ``sqrt(max|h| / (eps^2 F))``
    and a rotation constraint ``0.5 eps / |f|`` is added; both are needed for the
    forward Euler step to stay bounded on the linear part.
    """
    grid = params.grid
    dx = grid.dx
    limits: dict[str, float] = {}
    if viscous == "explicit":
        limits["diffusion"] = 0.2 * dx * dx / max(params.nu, params.eta)
    u = velocity_array(data[:2], params)
    speed = float(np.max(np.sqrt(u[0] ** 2 + u[1] ** 2)))
    speed += math.sqrt(float(np.max(np.abs(data[2]))) / (params.epsilon**2 * params.froude))
    limits["advection"] = 0.5 * dx / speed if speed > 0 else INF
    limits["rotation"] = 0.5 * params.epsilon / abs(params.coriolis_f) if params.coriolis_f else INF
    s = basis.sup_norm_sq_sum()
    limits["noise"] = 0.1 / s if s > 0 else INF
    return limits


def check_stability(params: PhysicalParams, basis: NoiseBasis, data: np.ndarray, dt: float,
                    viscous: str = "explicit") -> None:
    for name, limit in stability_limits(params, basis, data, viscous).items():
        if dt > limit:
            raise StabilityError(name, dt, limit)


# --------------------------------------------------------------- step kernels


def _if_factor(grid: TorusGrid, params: PhysicalParams, dt: float) -> np.ndarray:
    gamma = np.array([params.nu, params.nu, params.eta])[:, None, None]
    return np.exp(-gamma * grid.ksq * dt)


def _apply_if(grid: TorusGrid, E: np.ndarray, data: np.ndarray) -> np.ndarray:
    return grid.ifft(E * grid.fft(data))


def _drift(grid, data, params, factor, viscous, frozen):
    """Drift with the nonlinearity either computed from ``data`` or taken from ``frozen``."""
    if frozen is None:
        return drift_array(grid, data, params, factor, viscous=viscous)
    f_prev, nl_prev = frozen
    out = linear_terms(grid, data, params, grid.fft(data), viscous=viscous)
    if f_prev != 0.0:
        out -= f_prev * nl_prev
    return out


def em_ito_array(grid: TorusGrid, data: np.ndarray, params: PhysicalParams, basis: NoiseBasis,
                 R: float, dt: float, dW: np.ndarray, E: Optional[np.ndarray] = None,
                 frozen: Optional[tuple] = None) -> np.ndarray:
    """One Euler-Maruyama step on raw arrays; ``frozen=(f_R, nl)`` replaces the nonlinearity."""
    factor = truncation_factor(grid, data, R) if frozen is None else None
    drift = _drift(grid, data, params, factor, E is None, frozen)
    G, corr = basis.apply_with_correction(data)
    if E is None:
        return data + dt * (drift + corr) - basis.weighted_sum(G, dW)
    return _apply_if(grid, E, data + dt * (drift + corr) - basis.weighted_sum(G, dW))


def heun_strat_array(grid: TorusGrid, data: np.ndarray, params: PhysicalParams, basis: NoiseBasis,
                     R: float, dt: float, dW: np.ndarray, E: Optional[np.ndarray] = None) -> np.ndarray:
    """One Stratonovich Heun step on raw arrays."""
    explicit = E is None
    d0 = drift_array(grid, data, params, truncation_factor(grid, data, R), viscous=explicit)
    s0 = basis.weighted_sum(basis.apply_all(data), dW)
    if explicit:
        pred = data + dt * d0 - s0
    else:
        pred = _apply_if(grid, E, data + dt * d0 - s0)
    _require_finite(pred)
    d1 = drift_array(grid, pred, params, truncation_factor(grid, pred, R), viscous=explicit)
    s1 = basis.weighted_sum(basis.apply_all(pred), dW)
    if explicit:
        return data + 0.5 * dt * (d0 + d1) - 0.5 * (s0 + s1)
    return _apply_if(grid, E, data + 0.5 * dt * d0 - 0.5 * s0) + 0.5 * dt * d1 - 0.5 * s1


def _require_finite(arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteTendencyError("noise")


def _check_inputs(state: State, params: PhysicalParams, basis: NoiseBasis, dW) -> np.ndarray:
    if state.grid != params.grid or state.grid != basis.grid:
        raise GridMismatchError("state, parameters and noise basis must share one grid")
    dW = np.asarray(dW, dtype=float).reshape(-1)
    if dW.size != basis.K:
        raise ValueError(f"expected {basis.K} increments, got {dW.size}")
    return dW


def step_em_ito(state: State, params: PhysicalParams, basis: NoiseBasis, R: float, dt: float,
                increments) -> State:
    dW = _check_inputs(state, params, basis, increments)
    return State(state.grid, em_ito_array(state.grid, state.data, params, basis, R, dt, dW))


def step_heun_strat(state: State, params: PhysicalParams, basis: NoiseBasis, R: float, dt: float,
                    increments) -> State:
    dW = _check_inputs(state, params, basis, increments)
    return State(state.grid, heun_strat_array(state.grid, state.data, params, basis, R, dt, dW))


# ------------------------------------------------------------------ recording


def norm_diagnostics(grid: TorusGrid, data: np.ndarray) -> tuple[float, float, float]:
    """``(||v||_{1,2} + ||h||_{1,2}, ||a||_{2,2}, mass)`` from a single transform."""
    fh = grid.fft(data)
    w1 = grid.sobolev_weight(1)
    n12 = sum(math.sqrt(max(grid.spectral_inner_product(x, x, w1), 0.0)) for x in (fh[:2], fh[2]))
    n22 = math.sqrt(max(grid.spectral_inner_product(fh, fh, grid.sobolev_weight(2)), 0.0))
    mass = float(fh[2, 0, 0].real) * grid.cell_area
    return n12, n22, mass


@dataclass
class TrajectoryRecord:
    """Time series of norms and (thinned) states from one integration.

    ``t22`` is the running norm ``sqrt(sup_s ||a_s||_{1,2}^2 + int ||a_s||_{2,2}^2 ds)``
    with the sup over the additive ``W^{1,2}`` norm and left-endpoint quadrature.
    """

    grid: TorusGrid
    times: np.ndarray
    norm12: np.ndarray
    norm22: np.ndarray
    t22: np.ndarray
    fR: np.ndarray
    mass: np.ndarray
    state_times: np.ndarray
    states: np.ndarray = field(repr=False)
    tau_R_hits: dict
    tau_hat_M_hits: dict
    blown_up: bool
    last_finite_time: float
    seed: Optional[int]
    scheme: str
    config_hash: str
    dt: float
    R: float
    abort_reason: Optional[str] = None

    @property
    def final_state(self) -> State:
        return State(self.grid, self.states[-1])

    def state_at(self, index: int) -> State:
        return State(self.grid, self.states[index])

    def csv_rows(self):
        return zip(self.times, self.norm12, self.norm22, self.t22, self.fR, self.mass)

    def to_csv(self, path: Path | str) -> None:
        write_csv(path, CSV_COLUMNS, self.csv_rows())

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "scheme": self.scheme,
            "config_hash": self.config_hash,
            "dt": self.dt,
            "R": self.R,
            "steps_recorded": int(self.times.size - 1),
            "final_time": float(self.times[-1]),
            "blown_up": self.blown_up,
            "abort_reason": self.abort_reason,
            "last_finite_time": self.last_finite_time,
            "tau_R_hits": {repr(k): v for k, v in self.tau_R_hits.items()},
            "tau_hat_M_hits": {repr(k): v for k, v in self.tau_hat_M_hits.items()},
            "final_norm12": float(self.norm12[-1]),
            "sup_norm12": float(np.max(self.norm12)),
            "final_t22": float(self.t22[-1]),
            "initial_mass": float(self.mass[0]),
            "final_mass": float(self.mass[-1]),
        }

    def to_json(self, path: Path | str, extra: Optional[dict] = None) -> None:
        write_json(path, {**self.summary(), **(extra or {})})

    def save_snapshots(self, directory: Path | str) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        out = []
        for i, (t, data) in enumerate(zip(self.state_times, self.states)):
            comps = {"v1": data[0], "v2": data[1], "h": data[2]}
            bin_path, _ = save_snapshot(directory / f"state_{i:05d}", self.grid, comps, float(t), self.seed,
                                        {"config_hash": self.config_hash})
            out.append(bin_path)
        return out


class _Recorder:
    def __init__(self, grid: TorusGrid, config: IntegrationConfig):
        self.grid = grid
        self.config = config
        self.times, self.n12, self.n22, self.t22, self.fR, self.mass = [], [], [], [], [], []
        self.state_times, self.states = [], []
        self.sup_sq = 0.0
        self.integral = 0.0
        self.last_n22 = None
        self.tau_R = {r: None for r in config.monitor_R}
        self.tau_M = {m: None for m in config.monitor_M}

    def add(self, t: float, data: np.ndarray, step: int, force_state: bool = False) -> float:
        n12, n22, mass = norm_diagnostics(self.grid, data)
        if self.last_n22 is not None:
            self.integral += self.last_n22**2 * self.config.dt
        self.last_n22 = n22
        self.sup_sq = max(self.sup_sq, n12 * n12)
        t22 = math.sqrt(self.sup_sq + self.integral)
        self.times.append(t)
        self.n12.append(n12)
        self.n22.append(n22)
        self.t22.append(t22)
        self.fR.append(truncation_value(n12, self.config.R) if math.isfinite(n12) else 0.0)
        self.mass.append(mass)
        for r, hit in self.tau_R.items():
            if hit is None and n12 >= r:
                self.tau_R[r] = t
        for m, hit in self.tau_M.items():
            if hit is None and t22 >= m:
                self.tau_M[m] = t
        if force_state or step % self.config.record_every == 0:
            self.state_times.append(t)
            self.states.append(data.copy())
        return n12

    def build(self, scheme, seed, chash, blown_up, last_t, reason) -> TrajectoryRecord:
        arr = lambda x: np.asarray(x, dtype=float)
        return TrajectoryRecord(
            grid=self.grid, times=arr(self.times), norm12=arr(self.n12), norm22=arr(self.n22),
            t22=arr(self.t22), fR=arr(self.fR), mass=arr(self.mass),
            state_times=arr(self.state_times), states=np.asarray(self.states),
            tau_R_hits=dict(self.tau_R), tau_hat_M_hits=dict(self.tau_M), blown_up=blown_up,
            last_finite_time=last_t, seed=seed, scheme=scheme, config_hash=chash,
            dt=self.config.dt, R=self.config.R, abort_reason=reason,
        )


def run_hash(params: PhysicalParams, basis: NoiseBasis, config: IntegrationConfig) -> str:
    return _hash({"grid": {"n": params.grid.n, "length": params.grid.length},
                  "params": params.scalars(), "basis": basis.spec(), "integration": config.as_dict()})


def integrate(initial: State, params: PhysicalParams, basis: NoiseBasis, config: IntegrationConfig,
              path: Optional[NoisePath] = None, seed: Optional[int] = None,
              frozen: Optional[Callable[[int], tuple]] = None, chash: Optional[str] = None) -> TrajectoryRecord:
    """Integrate to ``config.T`` or until blow-up.

    The noise path is taken from ``path`` or sampled from ``seed``.  ``frozen``,
    used by the Picard solver, maps a step index to the ``(f_R, nl)`` pair that
    replaces the nonlinearity (Euler-Maruyama only).
    """
    grid = initial.grid
    if params.grid != grid or basis.grid != grid:
        raise GridMismatchError("state, parameters and noise basis must share one grid")
    steps = config.steps
    if path is None:
        path = sample_path(basis.K, config.dt, steps, 0 if seed is None else seed)
    else:
        if path.K != basis.K:
            raise ValueError(f"noise path has {path.K} modes, basis has {basis.K}")
        if path.steps < steps or not math.isclose(path.dt, config.dt, rel_tol=1e-12):
            raise ValueError(f"noise path (dt={path.dt}, steps={path.steps}) does not cover the run")
        if seed is None:
            seed = path.seed
    if frozen is not None and config.scheme != "em_ito":
        raise ValueError("frozen forcing is only supported by the em_ito scheme")
    if config.check_stability:
        check_stability(params, basis, initial.data, config.dt, config.viscous)

    E = _if_factor(grid, params, config.dt) if config.viscous == "integrating_factor" else None
    rec = _Recorder(grid, config)
    data = initial.data.copy()
    rec.add(0.0, data, 0)
    blown_up, reason, last_t = False, None, 0.0
    inc = path.increments
    for j in range(steps):
        t_next = (j + 1) * config.dt
        dW = inc[:, j]
        try:
            if config.scheme == "em_ito":
                new = em_ito_array(grid, data, params, basis, config.R, config.dt, dW, E,
                                   None if frozen is None else frozen(j))
            else:
                new = heun_strat_array(grid, data, params, basis, config.R, config.dt, dW, E)
        except NonFiniteTendencyError as exc:
            blown_up, reason = True, f"non-finite {exc.term} term at t={t_next!r}"
            break
        if not np.all(np.isfinite(new)):
            blown_up, reason = True, f"non-finite state at t={t_next!r}"
            break
        data = new
        n12 = rec.add(t_next, data, j + 1, force_state=(j + 1 == steps))
        last_t = t_next
        if n12 > config.ceiling:
            blown_up, reason = True, f"norm12 exceeded ceiling {config.ceiling!r} at t={t_next!r}"
            if rec.state_times[-1] != t_next:
                rec.state_times.append(t_next)
                rec.states.append(data.copy())
            break
    if blown_up and rec.state_times[-1] != last_t:
        rec.state_times.append(last_t)
        rec.states.append(data.copy())
    chash = chash or run_hash(params, basis, config)
    return rec.build(config.scheme, seed, chash, blown_up, last_t, reason)
