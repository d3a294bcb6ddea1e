"""
Transport noise: divergence-free fields xi_i and the operators built from them.

    L_i f   = xi_i . grad f                     (component-wise for vectors)
    A_i v   = v^1 grad xi_i^1 + v^2 grad xi_i^2
    G_i a   = (L_i v + A_i v, L_i h)

Every product is dealiased.  The batched kernels act on ``(3, n, n)`` state
arrays and return one slice per mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .grid import GridMismatchError, TorusGrid
from .state import State

PHASES = ("cos", "sin")
GENERATOR_ID = "numpy-PCG64/SeedSequence(seed, spawn_key=(mode,))"


@dataclass(frozen=True)
class NoiseMode:
    k1: int
    k2: int
    phase: str
    amplitude: float

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"phase must be 'cos' or 'sin', got {self.phase!r}")
        if self.k1 == 0 and self.k2 == 0:
            raise ValueError("noise mode wavevector must be non-zero")
        if not self.amplitude >= 0:
            raise ValueError(f"noise amplitude must be >= 0, got {self.amplitude!r}")

    def as_dict(self) -> dict:
        return {"k1": self.k1, "k2": self.k2, "phase": self.phase, "amplitude": self.amplitude}


def _mode_field(grid: TorusGrid, mode: NoiseMode) -> np.ndarray:
    """``amplitude * (k_perp / |k|) * trig(k . x)`` sampled on the lattice."""
    X, Y = grid.coords()
    scale = 2.0 * math.pi / grid.length
    kx, ky = scale * mode.k1, scale * mode.k2
    kn = math.hypot(kx, ky)
    theta = kx * X + ky * Y
    wave = np.cos(theta) if mode.phase == "cos" else np.sin(theta)
    return mode.amplitude * np.stack([(-ky / kn) * wave, (kx / kn) * wave])


@dataclass(frozen=True, eq=False)
class NoiseBasis:
    """Finite family of divergence-free fields with their first derivatives.

    ``xi`` has shape ``(K, 2, n, n)``; ``grad_xi[i, l, j] = d_j xi_i^l``.
    """

    grid: TorusGrid
    modes: tuple = ()
    xi: np.ndarray = field(init=False, repr=False)
    grad_xi: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        modes = tuple(self.modes)
        limit = self.grid.max_resolved_wavenumber
        for m in modes:
            if max(abs(m.k1), abs(m.k2)) > limit:
                raise ValueError(
                    f"noise mode ({m.k1}, {m.k2}) lies outside the dealiased band |k| <= {limit}"
                )
        object.__setattr__(self, "modes", modes)
        if modes:
            xi = np.stack([_mode_field(self.grid, m) for m in modes])
            grad = self.grid.gradient(xi)
        else:
            xi = self.grid.zeros(0, 2)
            grad = self.grid.zeros(0, 2, 2)
        xi.setflags(write=False)
        grad.setflags(write=False)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "grad_xi", grad)

    @classmethod
    def from_fields(cls, grid: TorusGrid, xi: np.ndarray) -> "NoiseBasis":
        """Basis of arbitrary ``(K, 2, n, n)`` fields, e.g. constant test fields."""
        xi = np.array(grid.check(np.asarray(xi, dtype=float)))
        if xi.ndim != 4 or xi.shape[1] != 2:
            raise GridMismatchError(f"expected fields of shape (K, 2, n, n), got {xi.shape}")
        basis = cls(grid, ())
        grad = grid.gradient(xi)
        xi.setflags(write=False)
        grad.setflags(write=False)
        object.__setattr__(basis, "xi", xi)
        object.__setattr__(basis, "grad_xi", grad)
        return basis

    @property
    def K(self) -> int:
        return self.xi.shape[0]

    def __len__(self) -> int:
        return self.K

    def field(self, i: int) -> np.ndarray:
        return self.xi[i]

    def max_divergence(self) -> float:
        if not self.K:
            return 0.0
        return float(np.max(np.abs(self.grid.divergence(self.xi))))

    def summability(self) -> float:
        """``sum_i ||xi_i||_{4,inf}^2`` with spectral derivatives up to total order 4."""
        return float(sum(self.grid.max_norm_derivatives(x, 4) ** 2 for x in self.xi))

    def sup_norm_sq_sum(self) -> float:
        """``sum_i ||xi_i||_inf^2`` (pointwise Euclidean magnitude)."""
        if not self.K:
            return 0.0
        mag = np.sqrt(np.sum(self.xi**2, axis=1))
        return float(np.sum(np.max(mag, axis=(-2, -1)) ** 2))

    def spec(self) -> dict:
        if len(self.modes) != self.K:
            return {"custom_fields": self.K}
        return {"modes": [m.as_dict() for m in self.modes]}

    # --------------------------------------------------------------- kernels

    def _apply(self, X: np.ndarray, xi: np.ndarray, gxi: np.ndarray, gX: np.ndarray) -> np.ndarray:
        """Undealiased ``G`` for arrays broadcast against the mode axis."""
        out = np.empty(np.broadcast_shapes(X.shape, (xi.shape[0], 3, *X.shape[-2:])))
        # transport of all three components
        out[...] = xi[:, None, 0] * gX[..., 0, :, :] + xi[:, None, 1] * gX[..., 1, :, :]
        # momentum stretching on v only
        out[:, 0] += X[..., 0, :, :] * gxi[:, 0, 0] + X[..., 1, :, :] * gxi[:, 1, 0]
        out[:, 1] += X[..., 0, :, :] * gxi[:, 0, 1] + X[..., 1, :, :] * gxi[:, 1, 1]
        return out

    def apply_hat(self, data: np.ndarray) -> np.ndarray:
        """Dealiased spectra of ``G_i(a)`` for every mode, shape ``(K, 3, nx, ny)``."""
        grid = self.grid
        if not self.K:
            return np.zeros((0, 3, *grid.spectral_shape), dtype=complex)
        gX = grid.gradient(data)  # (3, 2, n, n)
        return grid.dealias_hat(grid.fft(self._apply(data, self.xi, self.grad_xi, gX)))

    def apply_all(self, data: np.ndarray) -> np.ndarray:
        """``G_i(a)`` for every mode, shape ``(K, 3, n, n)``."""
        if not self.K:
            return self.grid.zeros(0, 3)
        return self.grid.ifft(self.apply_hat(data))

    def apply_with_correction(self, data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(G_i(a) for all i, 1/2 sum_i G_i(G_i(a)))`` sharing the first pass."""
        grid = self.grid
        if not self.K:
            return grid.zeros(0, 3), grid.zeros(3)
        Gh = self.apply_hat(data)
        G = grid.ifft(Gh)
        gG = np.stack(
            [grid.ifft(grid.partial_hat(Gh, 1, 0)), grid.ifft(grid.partial_hat(Gh, 0, 1))],
            axis=-3,
        )  # (K, 3, 2, n, n)
        GG = self._apply(G, self.xi, self.grad_xi, gG)
        corr = 0.5 * grid.dealias(np.sum(GG, axis=0))
        return G, corr

    def weighted_sum(self, G: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """``sum_i weights[i] * G[i]`` with a fixed summation order."""
        if not self.K:
            return self.grid.zeros(3)
        return np.tensordot(np.asarray(weights, dtype=float), G, axes=(0, 0))


def basis_from_modes(grid: TorusGrid, modes: Iterable[NoiseMode | dict]) -> NoiseBasis:
    built = [m if isinstance(m, NoiseMode) else NoiseMode(**m) for m in modes]
    return NoiseBasis(grid, tuple(built))


def ordered_wavevectors(limit: int) -> list[tuple[int, int]]:
    """Half-plane integer wavevectors with ``max(|k1|,|k2|) <= limit``, lowest |k| first."""
    vecs = [
        (k1, k2)
        for k1 in range(-limit, limit + 1)
        for k2 in range(-limit, limit + 1)
        if (k1 > 0 or (k1 == 0 and k2 > 0))
    ]
    vecs.sort(key=lambda k: (k[0] ** 2 + k[1] ** 2, -k[0], -k[1]))
    return vecs


def default_basis(grid: TorusGrid, K: int = 8, A: float = 0.05, s: float = 3.0) -> NoiseBasis:
    """``K`` modes ``A |k|^-s (k_perp/|k|) {cos,sin}(k.x)`` from the lowest wavenumbers."""
    if int(K) != K or K < 0:
        raise ValueError(f"K must be a non-negative integer, got {K!r}")
    if not A > 0:
        raise ValueError(f"amplitude A must be positive, got {A!r}")
    vecs = ordered_wavevectors(grid.max_resolved_wavenumber)
    if K > 2 * len(vecs):
        raise ValueError(f"K={K} exceeds the {2 * len(vecs)} modes of the dealiased band")
    modes = []
    for k1, k2 in vecs:
        amp = A * math.hypot(k1, k2) ** (-s)
        for phase in PHASES:
            if len(modes) == K:
                break
            modes.append(NoiseMode(k1, k2, phase, amp))
    return NoiseBasis(grid, tuple(modes))


def basis_from_spec(grid: TorusGrid, spec: dict | None) -> NoiseBasis:
    """Build a basis from ``{"K", "A", "s"}`` shorthand or an explicit ``{"modes": [...]}``."""
    if not spec:
        return NoiseBasis(grid, ())
    if "modes" in spec:
        return basis_from_modes(grid, spec["modes"])
    return default_basis(grid, int(spec.get("K", 8)), float(spec.get("A", 0.05)), float(spec.get("s", 3.0)))


# ----------------------------------------------------------- single operators


def _check_vector(grid: TorusGrid, xi: np.ndarray) -> np.ndarray:
    xi = grid.check(np.asarray(xi, dtype=float))
    if xi.shape != (2, *grid.shape):
        raise GridMismatchError(f"expected a (2, n, n) vector field, got {xi.shape}")
    return xi


def lie_transport(grid: TorusGrid, xi: np.ndarray, f: np.ndarray) -> np.ndarray:
    """``xi . grad f`` for a scalar or (component-wise) a vector field."""
    xi = _check_vector(grid, xi)
    g = grid.gradient(grid.check(np.asarray(f, dtype=float)))
    return grid.dealias(xi[0] * g[..., 0, :, :] + xi[1] * g[..., 1, :, :])


def momentum_stretch(grid: TorusGrid, xi: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``v^1 grad xi^1 + v^2 grad xi^2``."""
    xi = _check_vector(grid, xi)
    v = _check_vector(grid, v)
    gxi = grid.gradient(xi)  # (2 comps, 2 derivs, n, n)
    return grid.dealias(v[0] * gxi[0] + v[1] * gxi[1])


def g_op(basis: NoiseBasis, i: int, state: State) -> State:
    """``G_i(v, h) = (L_i v + A_i v, L_i h)`` returned as a state-shaped tendency."""
    grid = basis.grid
    if state.grid != grid:
        raise GridMismatchError("state and noise basis live on different grids")
    xi = basis.xi[i]
    v_part = lie_transport(grid, xi, state.v) + momentum_stretch(grid, xi, state.v)
    return State.from_fields(grid, v_part, lie_transport(grid, xi, state.h))


def ito_correction(basis: NoiseBasis, state: State) -> State:
    """``1/2 sum_i G_i(G_i(a))``: the drift turning the Stratonovich form into Ito form."""
    if state.grid != basis.grid:
        raise GridMismatchError("state and noise basis live on different grids")
    _, corr = basis.apply_with_correction(state.data)
    return State(state.grid, corr)


# --------------------------------------------------------------- noise paths


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Brownian increments ``increments[i, j] = W^i(t_{j+1}) - W^i(t_j)``."""

    dt: float
    increments: np.ndarray
    seed: int
    generator: str = GENERATOR_ID

    @property
    def K(self) -> int:
        return self.increments.shape[0]

    @property
    def steps(self) -> int:
        return self.increments.shape[1]

    def coarsen(self, factor: int) -> "NoisePath":
        """Path on a grid ``factor`` times coarser; increments are summed exactly."""
        if factor < 1 or self.steps % factor:
            raise ValueError(f"cannot coarsen {self.steps} steps by {factor}")
        inc = self.increments.reshape(self.K, self.steps // factor, factor).sum(axis=-1)
        return NoisePath(self.dt * factor, inc, self.seed, self.generator)

    def scaled(self, factor: float) -> "NoisePath":
        return NoisePath(self.dt, self.increments * factor, self.seed, self.generator)

    def metadata(self) -> dict:
        return {"dt": self.dt, "K": self.K, "steps": self.steps, "seed": self.seed,
                "generator": self.generator}


def mode_stream(seed: int, mode: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(mode,))))


def sample_path(K: int | NoiseBasis, dt: float, steps: int, seed: int) -> NoisePath:
    """Gaussian increments with variance ``dt``; one independent stream per mode."""
    if isinstance(K, NoiseBasis):
        K = K.K
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps!r}")
    sq = math.sqrt(dt)
    inc = np.empty((K, steps))
    for i in range(K):
        inc[i] = mode_stream(seed, i).standard_normal(steps) * sq
    return NoisePath(float(dt), inc, int(seed))


def zero_path(K: int, dt: float, steps: int) -> NoisePath:
    return NoisePath(float(dt), np.zeros((K, steps)), 0, "zero")
