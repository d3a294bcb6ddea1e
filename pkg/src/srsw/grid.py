"""
Spectral substrate on the doubly periodic square.

Fields are real numpy arrays whose trailing two axes are the (x, y) lattice:
``f[..., i, j] = f(x_i, y_j)`` with ``x_i = i * length / n``.  Any number of
leading axes is allowed, so a vector field is an array of shape ``(2, n, n)``
and a batch of them ``(K, 2, n, n)``.

Transforms are real half-spectrum FFTs over the trailing axes (unnormalised
numpy convention).  The (0, 0) coefficient therefore equals ``n**2`` times the
field mean; inner products and norms divide that scaling out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

_AXES = (-2, -1)


class GridMismatchError(ValueError):
    """A field does not live on the grid it was handed to."""


class NonFiniteFieldError(FloatingPointError):
    """A field contains NaN or Inf values."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TorusGrid:
    """Uniform ``n x n`` lattice on the torus of side ``length``.

    Derived arrays (wavenumbers, masks, quadrature weights) are built once and
    marked read-only, so a grid can be shared freely between threads.
    """

    n: int = 64
    length: float = 2.0 * math.pi

    k1: np.ndarray = field(init=False, repr=False, compare=False)
    k2: np.ndarray = field(init=False, repr=False, compare=False)
    kx: np.ndarray = field(init=False, repr=False, compare=False)
    ky: np.ndarray = field(init=False, repr=False, compare=False)
    ksq: np.ndarray = field(init=False, repr=False, compare=False)
    dealias_mask: np.ndarray = field(init=False, repr=False, compare=False)
    parseval_weight: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 8 or n % 2:
            raise ValueError(f"grid size must be an even integer >= 8, got {n!r}")
        if not self.length > 0:
            raise ValueError(f"grid length must be positive, got {self.length!r}")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "length", float(self.length))

        k1 = np.fft.fftfreq(n, 1.0 / n).round().astype(np.int64)[:, None]
        k2 = np.fft.rfftfreq(n, 1.0 / n).round().astype(np.int64)[None, :]
        scale = 2.0 * math.pi / self.length
        kx = scale * k1.astype(float)
        ky = scale * k2.astype(float)
        mask = np.maximum(np.abs(k1), np.abs(k2)) <= n / 3.0

        weight = np.full((1, n // 2 + 1), 2.0)
        weight[0, 0] = 1.0
        weight[0, -1] = 1.0

        for name, value in (
            ("k1", k1),
            ("k2", k2),
            ("kx", kx),
            ("ky", ky),
            ("ksq", kx**2 + ky**2),
            ("dealias_mask", mask),
            ("parseval_weight", weight),
        ):
            object.__setattr__(self, name, _frozen(np.asarray(value)))

    # ------------------------------------------------------------------ basics

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def spectral_shape(self) -> tuple[int, int]:
        return (self.n, self.n // 2 + 1)

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def cell_area(self) -> float:
        return self.dx * self.dx

    @property
    def max_resolved_wavenumber(self) -> int:
        """Largest integer wavenumber kept by the two-thirds rule."""
        return int(math.floor(self.n / 3.0))

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid ``(X, Y)`` with ``indexing='ij'``."""
        x = np.arange(self.n) * self.dx
        return np.meshgrid(x, x, indexing="ij")

    def zeros(self, *lead: int) -> np.ndarray:
        return np.zeros((*lead, self.n, self.n))

    def check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        if f.ndim < 2 or f.shape[-2:] != self.shape:
            raise GridMismatchError(
                f"field of shape {f.shape} is not on the {self.n}x{self.n} grid"
            )
        return f

    # -------------------------------------------------------------- transforms

    def fft(self, f: np.ndarray) -> np.ndarray:
        return np.fft.rfft2(self.check(f), axes=_AXES)

    def ifft(self, fh: np.ndarray) -> np.ndarray:
        return np.fft.irfft2(fh, s=self.shape, axes=_AXES)

    def _multiplier(self, ax: int, ay: int) -> np.ndarray:
        """Symbol of d^ax/dx^ax d^ay/dy^ay; odd orders drop the Nyquist row/column."""
        m = ((1j * self.kx) ** ax) * ((1j * self.ky) ** ay)
        if ax % 2:
            m = m * (self.k1 != -self.n // 2)
        if ay % 2:
            m = m * (self.k2 != self.n // 2)
        return m

    def partial_hat(self, fh: np.ndarray, ax: int, ay: int) -> np.ndarray:
        return fh * self._multiplier(ax, ay)

    # -------------------------------------------------------------- operations

    def derivative(self, f: np.ndarray, axis: str | int, order: int = 1) -> np.ndarray:
        """Spectral derivative of ``f`` along ``axis`` ('x'/'y' or 0/1)."""
        if int(order) != order or order < 1:
            raise ValueError(f"derivative order must be a positive integer, got {order!r}")
        ax = {"x": 0, "y": 1, 0: 0, 1: 1}.get(axis)
        if ax is None:
            raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
        orders = (order, 0) if ax == 0 else (0, order)
        return self.ifft(self.partial_hat(self.fft(f), *orders))

    def partial(self, f: np.ndarray, ax: int, ay: int) -> np.ndarray:
        """Mixed derivative for the multi-index ``(ax, ay)``; ``(0, 0)`` is the identity."""
        if ax == 0 and ay == 0:
            return np.array(self.check(f), dtype=float)
        return self.ifft(self.partial_hat(self.fft(f), ax, ay))

    def gradient(self, f: np.ndarray) -> np.ndarray:
        """Stack ``(d/dx f, d/dy f)`` on a new axis placed before the lattice axes."""
        fh = self.fft(f)
        return np.stack(
            [self.ifft(self.partial_hat(fh, 1, 0)), self.ifft(self.partial_hat(fh, 0, 1))],
            axis=-3,
        )

    def divergence(self, w: np.ndarray) -> np.ndarray:
        """Divergence of a vector field stored with components on axis -3."""
        w = self.check(w)
        if w.shape[-3] != 2:
            raise GridMismatchError(f"expected a vector field, got shape {w.shape}")
        wh = self.fft(w)
        return self.ifft(self.partial_hat(wh[..., 0, :, :], 1, 0) + self.partial_hat(wh[..., 1, :, :], 0, 1))

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return self.ifft(-self.ksq * self.fft(f))

    def dealias_hat(self, fh: np.ndarray) -> np.ndarray:
        return fh * self.dealias_mask

    def dealias(self, f: np.ndarray) -> np.ndarray:
        """Zero every mode with ``max(|k1|, |k2|) > n/3``."""
        return self.ifft(self.dealias_hat(self.fft(f)))

    def mean(self, f: np.ndarray) -> np.ndarray:
        return np.mean(self.check(f), axis=_AXES)

    def integral(self, f: np.ndarray) -> np.ndarray:
        return np.sum(self.check(f), axis=_AXES) * self.cell_area

    def inner_product(self, f: np.ndarray, g: np.ndarray) -> float:
        """Uniform quadrature of the integral of ``f * g`` over the torus."""
        f, g = self.check(f), self.check(g)
        if f.shape != g.shape:
            raise GridMismatchError(f"shape mismatch {f.shape} vs {g.shape}")
        return float(np.sum(f * g) * self.cell_area)

    def spectral_inner_product(self, fh: np.ndarray, gh: np.ndarray, weight=1.0) -> float:
        """Parseval form of :meth:`inner_product`, optionally with a spectral weight."""
        scale = self.length**2 / float(self.n) ** 4
        return float(np.sum(self.parseval_weight * weight * (fh * np.conj(gh)).real) * scale)

    def sobolev_weight(self, k: int) -> np.ndarray:
        return (1.0 + self.ksq) ** k

    def sobolev_norm(self, fields: np.ndarray | Sequence[np.ndarray], k: int) -> float:
        """W^{k,2} norm with spectral weight ``(1 + |kappa|^2)^k``.

        Component norms are combined in quadrature.  For ``k = 1`` the weight
        reproduces ``||f||^2 + ||df/dx||^2 + ||df/dy||^2`` exactly.
        """
        if k not in (0, 1, 2):
            raise ValueError(f"sobolev order must be 0, 1 or 2, got {k!r}")
        arr = np.asarray(fields, dtype=float)
        fh = self.fft(arr)
        return math.sqrt(max(self.spectral_inner_product(fh, fh, self.sobolev_weight(k)), 0.0))

    def multi_index_norm(self, f: np.ndarray, k: int) -> float:
        """Brute-force ``sqrt(sum_{|alpha|<=k} ||d^alpha f||^2)`` with explicit derivatives."""
        total = 0.0
        for order in range(k + 1):
            for ax in range(order + 1):
                d = self.partial(f, ax, order - ax)
                total += float(np.sum(d * d)) * self.cell_area
        return math.sqrt(total)

    def max_norm_derivatives(self, f: np.ndarray, k: int) -> float:
        """``sum_{|alpha|<=k} max |d^alpha f|`` on the lattice (component-wise max)."""
        fh = self.fft(f)
        total = 0.0
        for order in range(k + 1):
            for ax in range(order + 1):
                d = fh if order == 0 else self.partial_hat(fh, ax, order - ax)
                total += float(np.max(np.abs(self.ifft(d))))
        return total


def require_finite(f: np.ndarray, what: str = "field") -> np.ndarray:
    if not np.all(np.isfinite(f)):
        raise NonFiniteFieldError(f"{what} contains non-finite values")
    return f


def same_grid(grids: Iterable[TorusGrid]) -> TorusGrid:
    grids = list(grids)
    first = grids[0]
    for g in grids[1:]:
        if g != first:
            raise GridMismatchError(f"grids differ: {first} vs {g}")
    return first
