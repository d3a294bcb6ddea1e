"""Tests for the transport-noise basis, its operators and Brownian paths."""

import math

import numpy as np
import pytest

from srsw.grid import TorusGrid
from srsw.noise import (NoiseBasis, NoiseMode, basis_from_spec, default_basis, g_op, ito_correction,
                        lie_transport, momentum_stretch, ordered_wavevectors, sample_path, zero_path)
from srsw.state import State

from conftest import band_limited, fd4


def constant_basis(grid, c):
    xi = np.zeros((1, 2, *grid.shape))
    xi[0, 0] = c
    return NoiseBasis.from_fields(grid, xi)


class TestBasis:
    def test_empty_basis(self, grid, rng):
        b = NoiseBasis(grid, ())
        s = State(grid, band_limited(grid, rng, (3,)))
        assert b.K == 0 and b.apply_all(s.data).shape == (0, 3, *grid.shape)
        assert not np.any(ito_correction(b, s).data)
        assert b.summability() == 0.0

    def test_default_basis(self, grid):
        b = default_basis(grid)
        assert b.K == 8 and len(b.modes) == 8
        assert {m.phase for m in b.modes} == {"cos", "sin"}
        assert b.max_divergence() < 1e-10

    def test_mode_amplitudes(self, grid):
        b = default_basis(grid, K=4, A=0.05, s=3)
        for m, xi in zip(b.modes, b.xi):
            assert math.isclose(m.amplitude, 0.05 * math.hypot(m.k1, m.k2) ** -3)
            assert math.isclose(np.max(np.hypot(*xi)), m.amplitude, rel_tol=1e-9)

    def test_summability_oracle(self, grid):
        b = default_basis(grid, K=8, A=0.05, s=3)
        X, Y = grid.coords()
        total = 0.0
        for m in b.modes:
            # every derivative of a unit-amplitude k_perp/|k| trig(k.x) field is bounded by |k1|^a |k2|^b
            kx, ky = m.k1, m.k2
            kn = math.hypot(kx, ky)
            s = 0.0
            for a in range(5):
                for c in range(5 - a):
                    s += m.amplitude * abs(kx) ** a * abs(ky) ** c * max(abs(ky), abs(kx)) / kn * (
                        1.0 if (ky == 0 or kx == 0) else 1.0)
            # brute force: sum over derivative orders of component-wise grid max
            brute = 0.0
            xi = b.xi[b.modes.index(m)]
            for a in range(5):
                for c in range(5 - a):
                    d = xi
                    if a:
                        d = grid.derivative(d, "x", a)
                    if c:
                        d = grid.derivative(d, "y", c)
                    brute += np.max(np.abs(d))
            total += brute**2
        assert math.isclose(b.summability(), total, rel_tol=1e-8)

    def test_rejects_unresolved_modes(self, grid):
        with pytest.raises(ValueError):
            NoiseBasis(grid, (NoiseMode(30, 0, "cos", 0.1),))
        with pytest.raises(ValueError):
            NoiseMode(0, 0, "cos", 0.1)
        with pytest.raises(ValueError):
            default_basis(grid, K=-1)

    def test_spec_round_trip(self, grid):
        b = default_basis(grid, K=3)
        again = basis_from_spec(grid, b.spec())
        assert np.array_equal(again.xi, b.xi)
        assert basis_from_spec(grid, None).K == 0

    def test_ordered_wavevectors(self):
        vecs = ordered_wavevectors(2)
        assert vecs[:2] == [(1, 0), (0, 1)]
        assert len(vecs) == 12 and len(set(vecs)) == 12


class TestOperators:
    def test_transport_of_constant(self, grid):
        b = default_basis(grid)
        assert np.max(np.abs(lie_transport(grid, b.xi[0], np.full(grid.shape, 3.0)))) < 1e-12

    def test_transport_constant_field_is_dx(self, grid):
        X, _ = grid.coords()
        xi = np.stack([np.ones(grid.shape), np.zeros(grid.shape)])
        assert np.max(np.abs(lie_transport(grid, xi, np.sin(X)) - np.cos(X))) < 1e-12

    def test_transport_fd_oracle(self, grid256):
        g = grid256
        X, Y = g.coords()
        xi = np.stack([np.sin(Y) + 0.3 * np.cos(2 * Y), 0.5 * np.cos(X)])
        f = np.exp(0.5 * np.sin(X)) * np.cos(Y)
        expect = xi[0] * fd4(f, g.dx, 0) + xi[1] * fd4(f, g.dx, 1)
        assert np.max(np.abs(lie_transport(g, xi, f) - expect)) < 1e-6

    def test_stretch_trivial_cases(self, grid, rng):
        v = band_limited(grid, rng, (2,))
        const = np.stack([np.full(grid.shape, 0.4), np.full(grid.shape, -1.0)])
        assert np.max(np.abs(momentum_stretch(grid, const, v))) < 1e-12
        assert not np.any(momentum_stretch(grid, default_basis(grid).xi[0], np.zeros_like(v)))

    def test_stretch_compositional_oracle(self, grid, rng):
        xi = default_basis(grid).xi[3]
        v = band_limited(grid, rng, (2,))
        expect = np.stack([
            v[0] * grid.derivative(xi[0], "x") + v[1] * grid.derivative(xi[1], "x"),
            v[0] * grid.derivative(xi[0], "y") + v[1] * grid.derivative(xi[1], "y"),
        ])
        assert np.max(np.abs(momentum_stretch(grid, xi, v) - grid.dealias(expect))) < 1e-12

    def test_g_op_zero_and_linear(self, grid, rng):
        b = default_basis(grid)
        assert not np.any(g_op(b, 2, State.zeros(grid)).data)
        a = State(grid, band_limited(grid, rng, (3,)))
        c = State(grid, band_limited(grid, rng, (3,)))
        lhs = g_op(b, 2, a + c).data
        rhs = g_op(b, 2, a).data + g_op(b, 2, c).data
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_g_op_constant_state(self, grid):
        b = default_basis(grid)
        s = State(grid, np.ones((3, *grid.shape)) * np.array([0.3, -0.2, 1.0])[:, None, None])
        out = g_op(b, 1, s)
        expect = momentum_stretch(grid, b.xi[1], s.v)
        assert np.max(np.abs(out.v - expect)) < 1e-12 and np.max(np.abs(out.h)) < 1e-12

    def test_batched_matches_single(self, grid, rng):
        b = default_basis(grid)
        s = State(grid, band_limited(grid, rng, (3,)))
        G = b.apply_all(s.data)
        for i in range(b.K):
            assert np.max(np.abs(G[i] - g_op(b, i, s).data)) < 1e-12

    def test_ito_correction_constant_mode(self, grid):
        c = 0.7
        X, _ = grid.coords()
        s = State.from_fields(grid, grid.zeros(2), np.sin(X))
        corr = ito_correction(constant_basis(grid, c), s)
        assert np.max(np.abs(corr.h + 0.5 * c * c * np.sin(X))) < 1e-12
        assert not np.any(ito_correction(default_basis(grid), State.zeros(grid)).data)

    def test_ito_correction_composes_g_op(self, grid, rng):
        b = default_basis(grid)
        s = State(grid, band_limited(grid, rng, (3,)))
        expect = sum(g_op(b, i, g_op(b, i, s)).data for i in range(b.K)) * 0.5
        assert np.max(np.abs(ito_correction(b, s).data - expect)) < 1e-10

    def test_skew_symmetry(self, grid, rng):
        b = default_basis(grid)
        for _ in range(50):
            f = band_limited(grid, rng)
            for xi in b.xi:
                assert abs(grid.inner_product(f, lie_transport(grid, xi, f))) < 1e-10 * grid.inner_product(f, f)

    def test_h_mean_preserved(self, grid, rng):
        b = default_basis(grid)
        s = State(grid, band_limited(grid, rng, (3,)) + 1.0)
        for i in range(b.K):
            assert abs(g_op(b, i, s).h.mean()) < 1e-12
        assert abs(ito_correction(b, s).h.mean()) < 1e-12

    def test_correction_is_linear(self, grid, rng):
        b = default_basis(grid)
        s = State(grid, band_limited(grid, rng, (3,)))
        assert np.allclose(ito_correction(b, s.scaled(3.0)).data, 3 * ito_correction(b, s).data, atol=1e-12)


class TestPaths:
    def test_statistics(self):
        dt = 0.01
        inc = sample_path(1, dt, 100_000, 7).increments[0]
        se = math.sqrt(dt / inc.size)
        assert abs(inc.mean()) < 4 * se
        var_se = dt * math.sqrt(2 / (inc.size - 1))
        assert abs(inc.var(ddof=1) - dt) < 4 * var_se

    def test_determinism_and_independence(self, grid):
        a = sample_path(default_basis(grid), 0.01, 50, 3)
        b = sample_path(8, 0.01, 50, 3)
        assert np.array_equal(a.increments, b.increments)
        assert not np.array_equal(a.increments, sample_path(8, 0.01, 50, 4).increments)
        # a mode's stream does not depend on K
        assert np.array_equal(sample_path(3, 0.01, 50, 3).increments, a.increments[:3])

    def test_coarsen(self):
        p = sample_path(2, 0.01, 40, 1)
        c = p.coarsen(4)
        assert c.steps == 10 and math.isclose(c.dt, 0.04)
        assert np.allclose(c.increments.sum(axis=1), p.increments.sum(axis=1), atol=1e-14)
        with pytest.raises(ValueError):
            p.coarsen(3)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            sample_path(1, 0.0, 5, 0)
        assert not np.any(zero_path(2, 0.1, 5).increments)
