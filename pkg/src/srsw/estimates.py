"""
Numerical checks of the a priori estimates.

The constants in the analytical statements are non-constructive, so every
check here *fits* them on a training sample and then verifies the inequality
on a disjoint held-out sample.  Fitted constants carry a safety factor of 2,
in the direction that loosens the inequality.  A report passes when its worst
held-out ratio lhs/rhs is at most one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.stats import norm as _normal

from .dynamics import INF, drift_array, nonlinear_terms, truncation_factor
from .grid import TorusGrid
from .io import write_json
from .noise import NoiseBasis, NoisePath, default_basis, sample_path
from .samples import log_uniform, random_pairs, random_state, random_states, single_mode_state
from .state import PhysicalParams, State, norm12_additive, velocity_array
from .stepper import IntegrationConfig, TrajectoryRecord, integrate

SAFETY = 2.0
RESOLUTION_TOLERANCE = 0.25


@dataclass
class EstimateReport:
    id: str
    constants: dict
    worst_ratio: float
    n: int
    paths: int
    passed: bool
    samples: int = 0
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"id": self.id, "constants": self.constants, "worst_ratio": self.worst_ratio,
                "n": self.n, "paths": self.paths, "pass": bool(self.passed),
                "samples": self.samples, "details": self.details}

    def to_json(self, path: Path | str) -> None:
        write_json(path, self.to_dict())

    def row(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        consts = ", ".join(f"{k}={v:.4g}" for k, v in self.constants.items() if isinstance(v, (int, float)))
        return f"{self.id:<28} {flag:<5} worst={self.worst_ratio:<10.4g} n={self.n:<4} {consts}"


def summary_table(reports: Sequence[EstimateReport]) -> str:
    header = f"{'id':<28} {'flag':<5} {'worst':<16} {'n':<6} constants"
    return "\n".join([header, "-" * len(header)] + [r.row() for r in reports])


# ----------------------------------------------------------------- fitting


def split_halves(count: int) -> tuple[np.ndarray, np.ndarray]:
    """Alternate indices into disjoint train / held-out sets."""
    idx = np.arange(count)
    return idx[0::2], idx[1::2]


def fit_single_constant(lhs, fixed, scale, safety: float = SAFETY) -> float:
    """Smallest ``C`` with ``lhs <= fixed + C * scale`` on the sample, times ``safety``."""
    lhs, fixed, scale = (np.asarray(x, dtype=float) for x in (lhs, fixed, scale))
    ok = scale > 0
    if not np.any(ok):
        return 0.0
    need = np.max((lhs[ok] - fixed[ok]) / scale[ok])
    return safety * max(float(need), 0.0)


def worst_ratio(lhs, rhs) -> float:
    lhs, rhs = np.asarray(lhs, dtype=float), np.asarray(rhs, dtype=float)
    if lhs.size == 0:
        return 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(rhs > 0, lhs / rhs, np.where(lhs <= 0, 0.0, np.inf))
    return float(np.max(r))


def fit_cubic_envelope(q, d, safety: float = SAFETY) -> tuple[float, float]:
    """Fit ``(b, c)`` with ``b q^3 - c q >= d`` by a linear program.

    Constraints are divided by ``q`` and ``b`` is scaled by ``max(q)^2`` so all
    coefficients are O(1); the objective is the total slack in these
    growth-rate units.  Safety loosens both constants: ``b`` is multiplied and a
    positive ``c`` divided (a negative ``c`` multiplied) by ``safety``.
    """
    q, d = np.asarray(q, dtype=float), np.asarray(d, dtype=float)
    keep = q > 0
    q, d = q[keep], d[keep]
    if q.size == 0:
        return 0.0, 0.0
    q_ref = float(np.max(q))
    x2 = (q / q_ref) ** 2
    rate = d / q
    # unknowns (B, c) with b = B / q_ref^2; constraint -B x^2 + c <= -rate
    res = linprog(
        c=np.array([np.sum(x2), -float(q.size)]),
        A_ub=np.stack([-x2, np.ones_like(x2)], axis=1),
        b_ub=-rate,
        bounds=[(0, None), (None, None)],
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"envelope fit failed: {res.message}")
    B, c = (float(x) for x in res.x)
    b = B / q_ref**2
    b *= safety
    c = c / safety if c > 0 else c * safety
    return b, c


def cubic_envelope_ratio(q, d, b: float, c: float) -> float:
    """Worst ``(d + c q) / (b q^3)`` over samples with ``q > 0``."""
    q, d = np.asarray(q, dtype=float), np.asarray(d, dtype=float)
    keep = q > 0
    return worst_ratio(d[keep] + c * q[keep], b * q[keep] ** 3)


def relative_change(a: float, b: float) -> float:
    if a == b:
        return 0.0
    return abs(a - b) / max(abs(a), abs(b))


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    if trials <= 0:
        return 0.0, 1.0
    z = float(_normal.ppf(0.5 + confidence / 2))
    p = successes / trials
    den = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / den
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


# --------------------------------------------------------- spectral helpers


def _h1_inner(grid: TorusGrid, a: np.ndarray, b: np.ndarray) -> float:
    return grid.spectral_inner_product(grid.fft(a), grid.fft(b), grid.sobolev_weight(1))


def _norm(grid: TorusGrid, a: np.ndarray, k: int) -> float:
    return grid.sobolev_norm(a, k)


def multi_indices(k: int) -> list[tuple[int, int]]:
    return [(ax, order - ax) for order in range(k + 1) for ax in range(order + 1)]


def advective_bilinear(grid: TorusGrid, u: np.ndarray, v: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Dealiased ``(u . grad v, div(h u))`` for independent factors, shape ``(3, n, n)``."""
    gv = grid.gradient(v)  # (2, 2, n, n)
    out = np.empty((3, *grid.shape))
    out[:2] = grid.dealias(u[0] * gv[:, 0] + u[1] * gv[:, 1])
    out[2] = grid.divergence(grid.dealias(h * u))
    return out


# ------------------------------------------------------ advective estimate


def z_norm(grid: TorusGrid, a1: np.ndarray, a2: np.ndarray, k: int) -> float:
    """``||a1||_{k,2}^4 + ||a2||_{k,2}^4`` (the constant C is the fitted one)."""
    return _norm(grid, a1, k) ** 4 + _norm(grid, a2, k) ** 4


def advective_difference(grid: TorusGrid, a1: State, a2: State, params: PhysicalParams, R: float) -> np.ndarray:
    """``Q = f1 N(a1) - f2 N(a2)`` assembled as ``T1 + T2 + T3``.

    With ``u`` in the transported-vector slot and ``(v, h)`` in the transported
    slot, ``T1 = f1 B(u_bar; a1)``, ``T2 = f2 B(u2; a_bar)`` and
    ``T3 = (f1 - f2) B(u2; a1)``.  ``T3`` carries the signed factor difference,
    which is what makes the three terms sum to ``Q``.
    """
    f1 = truncation_factor(grid, a1.data, R)
    f2 = truncation_factor(grid, a2.data, R)
    u1 = velocity_array(a1.v, params)
    u2 = velocity_array(a2.v, params)
    ubar = u1 - u2
    abar = a1.data - a2.data
    t1 = f1 * advective_bilinear(grid, ubar, a1.v, a1.h)
    t2 = f2 * advective_bilinear(grid, u2, abar[:2], abar[2])
    t3 = (f1 - f2) * advective_bilinear(grid, u2, a1.v, a1.h)
    return t1 + t2 + t3


def advective_lhs(grid: TorusGrid, abar: np.ndarray, Q: np.ndarray, k: int) -> float:
    """``max_{|alpha| <= k} |<d^alpha a_bar, d^alpha Q>|`` over the full triple."""
    best = 0.0
    for ax, ay in multi_indices(k):
        da = grid.partial(abar, ax, ay)
        dq = grid.partial(Q, ax, ay)
        best = max(best, abs(float(np.sum(da * dq)) * grid.cell_area))
    return best


def _advective_terms(pairs, params, k, zeta, R):
    grid = params.grid
    rows = []
    for a1, a2 in pairs:
        abar = a1.data - a2.data
        if not np.any(abar):
            continue
        Q = advective_difference(grid, a1, a2, params, R)
        lhs = advective_lhs(grid, abar, Q, k)
        fixed = zeta * _norm(grid, abar, k + 1) ** 2
        scale = z_norm(grid, a1.data, a2.data, k) * _norm(grid, abar, k) ** 2
        rows.append((lhs, fixed, scale))
    return np.array(rows).reshape(-1, 3)


def check_advective_estimate(pairs: Sequence[tuple[State, State]], params: PhysicalParams, k: int = 1,
                             zeta: float = 0.05, R: float = 1.0) -> EstimateReport:
    """Fit ``C`` in ``|<d a_bar, d Q>| <= zeta ||a_bar||_{k+1}^2 + C ||Z|| ||a_bar||_k^2``."""
    if k not in (0, 1):
        raise ValueError(f"k must be 0 or 1, got {k!r}")
    rows = _advective_terms(pairs, params, k, zeta, R)
    tr, ho = split_halves(len(rows))
    C = fit_single_constant(rows[tr, 0], rows[tr, 1], rows[tr, 2])
    worst = worst_ratio(rows[ho, 0], rows[ho, 1] + C * rows[ho, 2])
    return EstimateReport(
        id=f"advective_k{k}", constants={"C": C, "zeta": zeta, "R": R}, worst_ratio=worst,
        n=params.grid.n, paths=0, passed=bool(worst <= 1.0 and len(ho) > 0), samples=len(rows),
        details={"train": int(len(tr)), "held_out": int(len(ho)), "skipped": len(pairs) - len(rows),
                 "train_worst": worst_ratio(rows[tr, 0], rows[tr, 1] + C * rows[tr, 2]),
                 "zeta_alone": zeta * worst_ratio(rows[:, 0], rows[:, 1])},
    )


# --------------------------------------------------------- growth estimates


def growth_terms_a(grid: TorusGrid, state: State, params: PhysicalParams) -> tuple[float, float]:
    """``(|<v, u . grad v>|, ||v||_{2,2}^2 + ||v||_{1,2}^6)``."""
    u = velocity_array(state.v, params)
    adv = advective_bilinear(grid, u, state.v, state.h)[:2]
    lhs = abs(grid.inner_product(state.v, adv))
    rhs = _norm(grid, state.v, 2) ** 2 + _norm(grid, state.v, 1) ** 6
    return lhs, rhs


def growth_terms_b(grid: TorusGrid, state: State, params: PhysicalParams) -> tuple[float, float]:
    """``(|<lap h, div(h u)>|, ||lap h||^2 + ||lap u||^2 + ||h||_{1,2}^6 + ||u||_{1,2}^6)``."""
    u = velocity_array(state.v, params)
    flux = advective_bilinear(grid, u, state.v, state.h)[2]
    lap_h = grid.laplacian(state.h)
    lap_u = grid.laplacian(u)
    lhs = abs(grid.inner_product(lap_h, flux))
    rhs = (grid.inner_product(lap_h, lap_h) + grid.inner_product(lap_u, lap_u)
           + _norm(grid, state.h, 1) ** 6 + _norm(grid, u, 1) ** 6)
    return lhs, rhs


def scaling_slope(fn: Callable[[State], float], state: State, lambdas=(0.25, 0.5, 1.0, 2.0, 4.0)) -> float:
    """Least-squares slope of ``log fn(lambda a)`` against ``log lambda``."""
    x = np.log(np.asarray(lambdas, dtype=float))
    y = np.log([fn(state.scaled(l)) for l in lambdas])
    return float(np.polyfit(x, y, 1)[0])


def _growth_report(ident, terms, grid) -> EstimateReport:
    terms = np.asarray(terms).reshape(-1, 2)
    tr, ho = split_halves(len(terms))
    C = fit_single_constant(terms[tr, 0], np.zeros(len(tr)), terms[tr, 1])
    worst = worst_ratio(terms[ho, 0], C * terms[ho, 1])
    return EstimateReport(id=ident, constants={"C": C}, worst_ratio=worst, n=grid.n, paths=0,
                          passed=bool(worst <= 1.0 and len(ho) > 0), samples=len(terms),
                          details={"train": int(len(tr)), "held_out": int(len(ho))})


def check_nonlinear_growth(samples: Sequence[State], params: PhysicalParams,
                           slope_bracket=(1.9, 3.1)) -> list[EstimateReport]:
    """Fit/verify both growth inequalities and measure the lhs scaling exponents."""
    grid = params.grid
    ta = [growth_terms_a(grid, s, params) for s in samples]
    tb = [growth_terms_b(grid, s, params) for s in samples]
    rep_a = _growth_report("growth_a", ta, grid)
    rep_b = _growth_report("growth_b", tb, grid)
    probe = max(samples, key=lambda s: growth_terms_a(grid, s, params)[0])
    slope_a = scaling_slope(lambda s: growth_terms_a(grid, s, params)[0], probe)
    probe = max(samples, key=lambda s: growth_terms_b(grid, s, params)[0])
    slope_b = scaling_slope(lambda s: growth_terms_b(grid, s, params)[0], probe)
    for rep, slope in ((rep_a, slope_a), (rep_b, slope_b)):
        rep.details["scaling_slope"] = slope
        rep.details["slope_bracket"] = list(slope_bracket)
        in_bracket = slope_bracket[0] <= slope <= slope_bracket[1]
        rep.details["slope_ok"] = bool(in_bracket)
        rep.passed = bool(rep.passed and in_bracket)
    return [rep_a, rep_b]


def check_truncated_l2(samples: Sequence[State], params: PhysicalParams, R: float = 1.0) -> list[EstimateReport]:
    """Fit/verify ``f_R^2 ||u.grad v||^2 <= C (||v||_{2,2}^2 + 1)`` and the flux analogue."""
    grid = params.grid
    rows = []
    for s in samples:
        fr = truncation_factor(grid, s.data, R)
        nl = nonlinear_terms(grid, s.data, params) if fr else grid.zeros(3)
        v22 = _norm(grid, s.v, 2) ** 2
        h22 = _norm(grid, s.h, 2) ** 2
        rows.append((fr * fr * grid.inner_product(nl[:2], nl[:2]), v22 + 1.0,
                     fr * fr * grid.inner_product(nl[2], nl[2]), v22 + h22 + 1.0))
    rows = np.array(rows).reshape(-1, 4)
    reps = []
    for ident, cols in (("truncated_l2_transport", (0, 1)), ("truncated_l2_flux", (2, 3))):
        rep = _growth_report(ident, rows[:, cols], grid)
        rep.constants["R"] = R
        reps.append(rep)
    return reps


# ------------------------------------------------------- energy envelope


def h1_sq(grid: TorusGrid, data: np.ndarray) -> float:
    """Canonical ``||a||_{1,2}^2`` of the full triple."""
    return _norm(grid, data, 1) ** 2


def f_tilde(grid: TorusGrid, data: np.ndarray, params: PhysicalParams, basis: NoiseBasis,
            R: float = INF) -> float:
    """Ito drift of ``||a||_{1,2}^2``: ``2<a, D(a) + 1/2 sum G^2 a>_1 + sum ||G_i a||_1^2``."""
    drift = drift_array(grid, data, params, truncation_factor(grid, data, R))
    G, corr = basis.apply_with_correction(data)
    total = 2.0 * _h1_inner(grid, data, drift + corr)
    for g in G:
        total += _h1_inner(grid, g, g)
    return total


def g_tilde(grid: TorusGrid, data: np.ndarray, basis: NoiseBasis) -> np.ndarray:
    """Diffusion coefficients ``-2<a, G_i a>_1`` of ``||a||_{1,2}^2``, one per mode."""
    G = basis.apply_all(data)
    return np.array([-2.0 * _h1_inner(grid, data, g) for g in G])


def check_f_tilde(samples: Sequence[State], params: PhysicalParams, basis: NoiseBasis) -> EstimateReport:
    """Fit/verify ``F~(a) <= C1 q^3 - C2 q`` with ``q = ||a||_{1,2}^2``."""
    grid = params.grid
    q = np.array([h1_sq(grid, s.data) for s in samples])
    d = np.array([f_tilde(grid, s.data, params, basis) for s in samples])
    tr, ho = split_halves(len(samples))
    C1, C2 = fit_cubic_envelope(q[tr], d[tr])
    worst = cubic_envelope_ratio(q[ho], d[ho], C1, C2)
    return EstimateReport(id="energy_F_tilde", constants={"C1": C1, "C2": C2}, worst_ratio=worst,
                          n=grid.n, paths=0, passed=bool(worst <= 1.0), samples=len(samples),
                          details={"train_worst": cubic_envelope_ratio(q[tr], d[tr], C1, C2)})


def check_g_tilde(samples: Sequence[State], params: PhysicalParams, basis: NoiseBasis) -> EstimateReport:
    """Fit/verify ``sum_i G~_i(a)^2 <= C3 q^2``."""
    grid = params.grid
    q = np.array([h1_sq(grid, s.data) for s in samples])
    lhs = np.array([float(np.sum(g_tilde(grid, s.data, basis) ** 2)) for s in samples])
    tr, ho = split_halves(len(samples))
    C3 = fit_single_constant(lhs[tr], np.zeros(len(tr)), q[tr] ** 2)
    worst = worst_ratio(lhs[ho], C3 * q[ho] ** 2)
    return EstimateReport(id="energy_G_tilde", constants={"C3": C3}, worst_ratio=worst, n=grid.n,
                          paths=0, passed=bool(worst <= 1.0), samples=len(samples))


def check_step_decomposition(trajs: Sequence[TrajectoryRecord], params: PhysicalParams, basis: NoiseBasis,
                             f_constants: dict, C3: float) -> EstimateReport:
    """Evaluate ``F~`` and ``G~`` along stochastic trajectories against previously fitted constants."""
    grid = params.grid
    q, d, g2 = [], [], []
    for tr in trajs:
        for data in tr.states:
            q.append(h1_sq(grid, data))
            d.append(f_tilde(grid, data, params, basis))
            g2.append(float(np.sum(g_tilde(grid, data, basis) ** 2)))
    q, d, g2 = map(np.asarray, (q, d, g2))
    wf = cubic_envelope_ratio(q, d, f_constants["C1"], f_constants["C2"])
    wg = worst_ratio(g2, C3 * q**2)
    worst = max(wf, wg)
    return EstimateReport(id="energy_step_decomposition", constants={**f_constants, "C3": C3},
                          worst_ratio=worst, n=grid.n, paths=len(trajs), passed=bool(worst <= 1.0),
                          samples=int(q.size), details={"F_worst": wf, "G_worst": wg})


def trajectory_q(traj: TrajectoryRecord) -> tuple[np.ndarray, np.ndarray]:
    """Times and canonical ``||a_t||_{1,2}^2`` of the stored (finite) states."""
    grid = traj.grid
    q = np.array([h1_sq(grid, s) for s in traj.states])
    return np.asarray(traj.state_times), q


def euler_envelope(times: np.ndarray, q0: float, b: float, c: float) -> np.ndarray:
    """Explicit Euler solution of ``dq = b q^3 - c q`` on the given time grid."""
    out = np.empty(len(times))
    out[0] = q0
    for j in range(1, len(times)):
        q = out[j - 1]
        out[j] = q + (times[j] - times[j - 1]) * (b * q**3 - c * q)
    return out


def envelope_pairs(traj: TrajectoryRecord) -> tuple[np.ndarray, np.ndarray]:
    """``(q_j, (q_{j+1} - q_j) / dt)`` pairs from a trajectory stored at every step."""
    t, q = trajectory_q(traj)
    return q[:-1], np.diff(q) / np.diff(t)


def check_energy_envelope(train: Sequence[TrajectoryRecord], held_out: Sequence[TrajectoryRecord],
                          R_monitor: Optional[float] = None) -> EstimateReport:
    """Fit ``(b, c)`` on training trajectories, check ``q_t <= Q_t`` on held-out ones.

    Only the pre-blow-up part of each record is used.  The envelope ``Q`` is the
    explicit Euler solution on the trajectory's own time grid; the discrete
    comparison is sound while ``x -> x + dt r(x)`` stays increasing, which the
    report checks.  With ``R_monitor`` the report also checks that no ``tau^R``
    was recorded where ``sqrt(2 Q_t) < R`` (additive norm <= sqrt(2) canonical norm).
    """
    qs, ds = zip(*(envelope_pairs(tr) for tr in train))
    b, c = fit_cubic_envelope(np.concatenate(qs), np.concatenate(ds))
    worst = 0.0
    monotone = True
    tau_consistent = True
    grid_n = train[0].grid.n if train else 0
    for tr in held_out:
        t, q = trajectory_q(tr)
        Q = euler_envelope(t, q[0], b, c)
        if not np.all(np.isfinite(Q)):
            worst = math.inf
            continue
        dt = np.diff(t)
        monotone &= bool(np.all(1.0 + dt * (3 * b * Q[:-1] ** 2 - c) > 0))
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(Q > 0, q / Q, np.where(q <= 0, 0.0, np.inf))
        worst = max(worst, float(np.max(r)))
        if R_monitor is not None and R_monitor in tr.tau_R_hits:
            hit = tr.tau_R_hits[R_monitor]
            if hit is not None and np.all(np.sqrt(2 * Q[t <= hit + 1e-12]) < R_monitor):
                tau_consistent = False
    fixed_point = math.sqrt(c / b) if b > 0 and c > 0 else math.nan
    return EstimateReport(
        id="energy_envelope", constants={"b": b, "c": c}, worst_ratio=worst, n=grid_n,
        paths=len(held_out), passed=bool(worst <= 1.0 and monotone and tau_consistent),
        samples=len(held_out),
        details={"train_trajectories": len(train), "euler_map_monotone": monotone,
                 "tau_consistent": tau_consistent, "fixed_point_q": fixed_point},
    )


def decays_after_transient(traj: TrajectoryRecord, transient: float = 0.25, tol: float = 1e-12) -> bool:
    """``||a_t||_{1,2}^2`` is nonincreasing after ``transient`` (relative tolerance ``tol``)."""
    t, q = trajectory_q(traj)
    q = q[t >= transient]
    return bool(np.all(np.diff(q) <= tol * np.maximum(q[:-1], 1e-300)))


# ------------------------------------------------------- continuity in IC


@dataclass
class ContinuityConfig:
    T: float = 1.0
    dt: float = 0.01
    R: float = 2.0
    M: float = 10.0
    paths: int = 32
    deltas: tuple = (1e-2, 1e-3, 1e-4)
    seed: int = 2024
    a0_norm: float = 0.5
    perturbation_mode: tuple = (1, 1)


def check_continuity_in_ic(a0: State, phi: State, params: PhysicalParams, basis: NoiseBasis,
                           cfg: ContinuityConfig) -> EstimateReport:
    """Paired-path study of ``E ||a_bar_t||_{1,2}^2 / ||a_bar_0||_{1,2}^2``.

    Pairs share the noise path and are stopped at the first time either member's
    running ``||.||_{t,2,2}`` reaches ``M``.  Three checks, each normalised so
    that 1 is the limit: the two smallest deltas give ratios within 2x; the
    affine fit of the log-ratio has residual below 10% of its range; the fitted
    Gronwall envelope ``C exp(C t)`` dominates the ratio.
    """
    grid = params.grid
    icfg = IntegrationConfig(scheme="em_ito", T=cfg.T, dt=cfg.dt, R=cfg.R, monitor_M=(cfg.M,))
    steps = icfg.steps
    n0 = h1_sq(grid, phi.data)
    sums = {d: np.zeros(steps + 1) for d in cfg.deltas}
    counts = np.zeros(steps + 1)
    zero_delta_max = 0.0
    for p in range(cfg.paths):
        path = sample_path(basis.K, cfg.dt, steps, cfg.seed + p)
        base = integrate(a0, params, basis, icfg, path=path)
        if p == 0:
            same = integrate(a0 + phi.scaled(0.0), params, basis, icfg, path=path)
            zero_delta_max = float(np.max(np.abs(same.states - base.states)))
        runs = {d: integrate(a0 + phi.scaled(d), params, basis, icfg, path=path) for d in cfg.deltas}
        stop = _stop_index(base, cfg.M)
        for r in runs.values():
            stop = min(stop, _stop_index(r, cfg.M))
        counts[: stop + 1] += 1
        for d, r in runs.items():
            diff = r.states[: stop + 1] - base.states[: stop + 1]
            sums[d][: stop + 1] += np.array([h1_sq(grid, x) for x in diff]) / (d * d * n0)
    valid = counts > 0
    t = np.arange(steps + 1)[valid] * cfg.dt
    ratios = {d: sums[d][valid] / counts[valid] for d in cfg.deltas}
    small = sorted(cfg.deltas)[:2]
    lin = np.maximum(ratios[small[0]] / ratios[small[1]], ratios[small[1]] / ratios[small[0]])
    lin_ratio = float(np.max(lin))
    logr = np.log(ratios[small[0]])
    beta, alpha = np.polyfit(t, logr, 1)
    resid = np.abs(logr - (alpha + beta * t))
    span = float(np.ptp(logr))
    resid_frac = float(np.max(resid) / span) if span > 0 else 0.0
    C = max(math.exp(alpha + float(np.max(resid))), beta, 1e-12)
    gron = float(np.max(ratios[small[0]] / (C * np.exp(C * t))))
    checks = {"linearity": lin_ratio / 2.0, "affine_residual": resid_frac / 0.1, "gronwall": gron}
    worst = max(checks.values())
    return EstimateReport(
        id="continuity_ic", constants={"C": C, "log_intercept": float(alpha), "log_slope": float(beta)},
        worst_ratio=worst, n=grid.n, paths=cfg.paths,
        passed=bool(worst <= 1.0 and zero_delta_max == 0.0), samples=int(valid.sum()),
        details={"normalised_checks": checks, "delta_ratio_max": lin_ratio, "residual_fraction": resid_frac,
                 "zero_delta_max_abs": zero_delta_max, "final_ratio": {repr(d): float(r[-1]) for d, r in ratios.items()},
                 "paths_at_T": int(counts[-1])},
    )


def _stop_index(rec: TrajectoryRecord, M: float) -> int:
    hit = rec.tau_hat_M_hits.get(M)
    last = len(rec.states) - 1
    if hit is None:
        return last
    return min(last, int(round(hit / rec.dt)))


# --------------------------------------------------- blow-up probability


@dataclass
class BlowupResult:
    norm0_sq: float
    staying: int
    paths: int
    estimate: float
    ci: tuple

    def to_dict(self) -> dict:
        return {"norm0_sq": self.norm0_sq, "staying": self.staying, "paths": self.paths,
                "estimate": self.estimate, "ci_low": self.ci[0], "ci_high": self.ci[1]}


def stayed_below(traj: TrajectoryRecord, C: float) -> bool:
    """``sup_t ||a_t||_{1,2}^2 < C`` along the whole horizon (a blown-up run never stays)."""
    return bool(not traj.blown_up and float(np.max(traj.norm12)) ** 2 < C)


def blowup_probability(a0: State, params: PhysicalParams, basis: NoiseBasis, config: IntegrationConfig,
                       C: float, paths: int, seed: int = 0) -> BlowupResult:
    """Monte Carlo fraction of paths with ``sup ||a_t||_{1,2}^2 < C`` and its Wilson interval."""
    stay = 0
    for p in range(paths):
        rec = integrate(a0, params, basis, config, seed=seed + p)
        stay += stayed_below(rec, C)
    lo, hi = wilson_interval(stay, paths)
    return BlowupResult(norm12_additive(a0.grid, a0.data) ** 2, stay, paths, stay / paths, (lo, hi))


def blowup_sweep(direction: State, norms_sq: Sequence[float], params: PhysicalParams, basis: NoiseBasis,
                 config: IntegrationConfig, C: float, paths: int, seed: int = 0) -> list[BlowupResult]:
    base = norm12_additive(direction.grid, direction.data)
    return [blowup_probability(direction.scaled(math.sqrt(n2) / base), params, basis, config, C, paths, seed)
            for n2 in norms_sq]


def sweep_monotone(results: Sequence[BlowupResult]) -> bool:
    """Staying probability nonincreasing in the initial norm, up to overlapping intervals."""
    ordered = sorted(results, key=lambda r: r.norm0_sq)
    return all(b.estimate <= a.estimate or b.ci[0] <= a.ci[1] for a, b in zip(ordered, ordered[1:]))


# ---------------------------------------------------------------- suites


def _resolution_check(reports_lo, reports_hi, keys) -> dict:
    out = {}
    for lo, hi in zip(reports_lo, reports_hi):
        for k in keys:
            if k in lo.constants:
                out[f"{lo.id}.{k}"] = relative_change(lo.constants[k], hi.constants[k])
    return out


def _attach_resolution(reports, changes) -> None:
    for rep in reports:
        mine = {k: v for k, v in changes.items() if k.startswith(rep.id + ".")}
        rep.details["resolution_change"] = mine
        stable = all(v < RESOLUTION_TOLERANCE for v in mine.values())
        rep.details["resolution_stable"] = stable
        rep.passed = bool(rep.passed and stable)


def suite_advective(n: int = 64, count: int = 100, seed: int = 11, zeta: float = 0.05, R: float = 1.0,
                    refine: bool = True) -> list[EstimateReport]:
    def run(nn):
        grid = TorusGrid(nn)
        params = PhysicalParams(grid)
        pairs = random_pairs(grid, count, seed)
        return [check_advective_estimate(pairs, params, k, zeta, R) for k in (0, 1)]

    reps = run(n)
    if refine:
        _attach_resolution(reps, _resolution_check(reps, run(2 * n), ["C"]))
    return reps


def suite_growth(n: int = 64, count: int = 100, seed: int = 12, refine: bool = True) -> list[EstimateReport]:
    def run(nn):
        grid = TorusGrid(nn)
        params = PhysicalParams(grid)
        samples = random_states(grid, count, seed, norm_range=(0.05, 5.0), h_mean=True)
        return check_nonlinear_growth(samples, params) + check_truncated_l2(samples, params)

    reps = run(n)
    if refine:
        _attach_resolution(reps, _resolution_check(reps, run(2 * n), ["C"]))
    return reps


def envelope_params(grid: TorusGrid) -> PhysicalParams:
    """Weak pressure coupling (``eps F = 10``) keeps the linear part close to dissipative."""
    return PhysicalParams(grid, epsilon=1.0, coriolis_f=1.0, froude=10.0, nu=0.1, eta=0.1)


def envelope_trajectories(grid: TorusGrid, count: int, seed: int, T: float = 1.0, dt: float = 0.01,
                          norm_range=(0.05, 1.0), basis: Optional[NoiseBasis] = None,
                          R_monitor: Optional[float] = None) -> list[TrajectoryRecord]:
    params = envelope_params(grid)
    basis = basis if basis is not None else NoiseBasis(grid, ())
    rng = np.random.default_rng(seed)
    cfg = IntegrationConfig(T=T, dt=dt, monitor_R=(R_monitor,) if R_monitor else ())
    out = []
    for i in range(count):
        a0 = random_state(grid, rng, kmax=4, norm12=log_uniform(rng, *norm_range))
        out.append(integrate(a0, params, basis, cfg, seed=seed + i))
    return out


def suite_envelope(n: int = 64, count: int = 50, seed: int = 13, trajectories: int = 8,
                   refine: bool = True) -> list[EstimateReport]:
    def fits(nn):
        grid = TorusGrid(nn)
        params = envelope_params(grid)
        basis = default_basis(grid)
        samples = random_states(grid, count, seed, norm_range=(0.05, 3.0), decay_range=(0.5, 4.0))
        return [check_f_tilde(samples, params, basis), check_g_tilde(samples, params, basis)]

    reps = fits(n)
    if refine:
        _attach_resolution(reps, _resolution_check(reps, fits(2 * n), ["C1", "C2", "C3"]))
    grid = TorusGrid(n)
    params = envelope_params(grid)
    basis = default_basis(grid)
    stoch = envelope_trajectories(grid, 4, seed + 2, norm_range=(0.1, 2.0), basis=basis)
    reps.append(check_step_decomposition(stoch, params, basis, reps[0].constants, reps[1].constants["C3"]))
    trajs = envelope_trajectories(grid, trajectories, seed + 1, R_monitor=1.0)
    tr, ho = split_halves(len(trajs))
    env = check_energy_envelope([trajs[i] for i in tr], [trajs[i] for i in ho], R_monitor=1.0)
    env.details["decay_after_transient"] = [decays_after_transient(t) for t in trajs]
    env.passed = bool(env.passed and all(env.details["decay_after_transient"]))
    return reps + [env]


def suite_continuity(n: int = 64, cfg: Optional[ContinuityConfig] = None) -> list[EstimateReport]:
    cfg = cfg or ContinuityConfig()
    grid = TorusGrid(n)
    params = envelope_params(grid)
    basis = default_basis(grid)
    a0 = random_state(grid, np.random.default_rng(cfg.seed), kmax=3, norm12=cfg.a0_norm)
    phi = single_mode_state(grid, *cfg.perturbation_mode, component=0, norm12=1.0)
    return [check_continuity_in_ic(a0, phi, params, basis, cfg)]


SUITES = {
    "advective": suite_advective,
    "growth": suite_growth,
    "envelope": suite_envelope,
    "continuity": suite_continuity,
}


def run_suite(name: str, **kwargs) -> list[EstimateReport]:
    if name == "all":
        return [r for key in SUITES for r in SUITES[key](**kwargs.get(key, {}))]
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)} or 'all'")
    return SUITES[name](**kwargs.get(name, {}))
