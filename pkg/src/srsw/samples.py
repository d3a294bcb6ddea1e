"""
Random band-limited states for the estimate checks.

Coefficients are drawn in a fixed wavevector order and the fields are
synthesised analytically, so a given generator state yields the same
continuum field on every grid that resolves the band.  Constants fitted on
such samples can therefore be compared across resolutions.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .grid import TorusGrid
from .noise import ordered_wavevectors
from .state import State, norm12_additive


def random_band_field(grid: TorusGrid, rng: np.random.Generator, ncomp: int = 1, kmax: int = 4,
                      decay: float = 1.0, include_mean: bool = False) -> np.ndarray:
    """Sum of ``cos/sin(k.x)`` over ``max(|k1|,|k2|) <= kmax`` with ``(1+|k|^2)^(-decay)`` amplitudes."""
    if kmax > grid.max_resolved_wavenumber:
        raise ValueError(f"band kmax={kmax} exceeds the dealiased band of the {grid.n} grid")
    X, Y = grid.coords()
    scale = 2.0 * math.pi / grid.length
    vecs = ordered_wavevectors(kmax)
    coef = rng.standard_normal((len(vecs), ncomp, 2))
    mean = rng.standard_normal(ncomp) if include_mean else np.zeros(ncomp)
    out = np.broadcast_to(mean[:, None, None], (ncomp, *grid.shape)).copy()
    for (k1, k2), c in zip(vecs, coef):
        amp = (1.0 + k1 * k1 + k2 * k2) ** (-decay)
        theta = scale * (k1 * X + k2 * Y)
        cs, sn = np.cos(theta), np.sin(theta)
        for m in range(ncomp):
            out[m] += amp * (c[m, 0] * cs + c[m, 1] * sn)
    return out


def random_state(grid: TorusGrid, rng: np.random.Generator, kmax: int = 4, decay: float = 1.0,
                 norm12: Optional[float] = None, h_mean: bool = False) -> State:
    """Random state, optionally rescaled so that ``||v||_{1,2} + ||h||_{1,2} = norm12``."""
    data = random_band_field(grid, rng, 3, kmax, decay, include_mean=False)
    if h_mean:
        data[2] += rng.standard_normal()
    if norm12 is not None:
        current = norm12_additive(grid, data)
        data *= norm12 / current if current > 0 else 0.0
    return State(grid, data)


def log_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def random_states(grid: TorusGrid, count: int, seed: int, norm_range=(0.05, 3.0), kmax: int = 4,
                  h_mean: bool = False, decay_range: Optional[tuple] = None) -> list[State]:
    """``count`` states with additive ``W^{1,2}`` norms log-uniform in ``norm_range``.

    With ``decay_range`` each state draws its spectral decay exponent uniformly
    from that interval, so the family spans both broadband and low-mode states.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        target = log_uniform(rng, *norm_range)
        decay = 1.0 if decay_range is None else float(rng.uniform(*decay_range))
        out.append(random_state(grid, rng, kmax, decay=decay, norm12=target, h_mean=h_mean))
    return out


def random_pairs(grid: TorusGrid, count: int, seed: int, norm_range=(0.2, 2.5),
                 kmax: int = 4) -> list[tuple[State, State]]:
    """Pairs ``(a1, a2)``; even entries are independent, odd ones are nearby perturbations."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        a1 = random_state(grid, rng, kmax, norm12=log_uniform(rng, *norm_range))
        if i % 2 == 0:
            a2 = random_state(grid, rng, kmax, norm12=log_uniform(rng, *norm_range))
        else:
            rel = log_uniform(rng, 1e-3, 0.5)
            dn = norm12_additive(grid, a1.data) * rel
            a2 = a1 + random_state(grid, rng, kmax, norm12=dn)
        out.append((a1, a2))
    return out


def single_mode_state(grid: TorusGrid, k1: int, k2: int, component: int = 0, norm12: float = 1.0) -> State:
    """State with a single ``cos(k.x)`` in one component, normalised in ``W^{1,2}``."""
    X, Y = grid.coords()
    scale = 2.0 * math.pi / grid.length
    data = grid.zeros(3)
    data[component] = np.cos(scale * (k1 * X + k2 * Y))
    data *= norm12 / norm12_additive(grid, data)
    return State(grid, data)
