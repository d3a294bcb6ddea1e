"""Tests for the explicit steppers, the stability rule and trajectory records."""

import math

import numpy as np
import pytest

from srsw.dynamics import drift_array
from srsw.grid import TorusGrid
from srsw.io import read_csv
from srsw.noise import NoiseBasis, default_basis, sample_path, zero_path
from srsw.samples import random_state
from srsw.state import PhysicalParams, State, norm12_additive
from srsw.stepper import (CSV_COLUMNS, IntegrationConfig, StabilityError, check_stability, integrate,
                          stability_limits, step_em_ito, step_heun_strat)


@pytest.fixture(scope="module")
def g32():
    return TorusGrid(32)


def small_state(grid, seed=1, norm=0.5, h_mean=1.0):
    a = random_state(grid, np.random.default_rng(seed), kmax=3, norm12=norm)
    return State(grid, a.data + np.array([0.0, 0.0, h_mean])[:, None, None])


def l2(grid, x):
    return math.sqrt(grid.inner_product(x, x))


class TestConfig:
    def test_steps(self):
        assert IntegrationConfig(T=1.0, dt=0.01).steps == 100
        with pytest.raises(ValueError, match="multiple"):
            IntegrationConfig(T=1.0, dt=0.3)

    @pytest.mark.parametrize("kw", [{"scheme": "rk4"}, {"viscous": "implicit"}, {"dt": 0.0}, {"R": 0.0},
                                    {"record_every": 0}])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            IntegrationConfig(**kw)

    def test_with_(self):
        c = IntegrationConfig().with_(scheme="heun_strat")
        assert c.scheme == "heun_strat" and c.dt == 1e-3


class TestStability:
    def test_limits_reported(self, g32):
        p = PhysicalParams(g32)
        lim = stability_limits(p, default_basis(g32), small_state(g32).data)
        assert set(lim) == {"diffusion", "advection", "rotation", "noise"}
        assert math.isclose(lim["diffusion"], 0.2 * g32.dx**2 / 0.1)
        assert math.isclose(lim["noise"], 0.1 / default_basis(g32).sup_norm_sq_sum())

    def test_violation_names_constraint(self, g32):
        p = PhysicalParams(g32)
        with pytest.raises(StabilityError, match="diffusion") as exc:
            check_stability(p, NoiseBasis(g32, ()), small_state(g32).data, 0.2)
        assert exc.value.constraint == "diffusion"

    def test_integrating_factor_drops_diffusion(self, g32):
        p = PhysicalParams(g32)
        lim = stability_limits(p, NoiseBasis(g32, ()), small_state(g32).data, "integrating_factor")
        assert "diffusion" not in lim or math.isinf(lim["diffusion"])


class TestSingleSteps:
    def test_em_without_noise_is_euler(self, g32):
        p = PhysicalParams(g32)
        a = small_state(g32)
        dt = 1e-3
        out = step_em_ito(a, p, NoiseBasis(g32, ()), math.inf, dt, [])
        assert np.array_equal(out.data, a.data + dt * drift_array(g32, a.data, p))

    @pytest.mark.parametrize("step", [step_em_ito, step_heun_strat])
    def test_zero_state_is_absorbing(self, g32, step):
        p = PhysicalParams(g32)
        out = step(State.zeros(g32), p, default_basis(g32), math.inf, 0.01, np.ones(8))
        assert not np.any(out.data)

    def test_increment_count_checked(self, g32):
        with pytest.raises(ValueError):
            step_em_ito(State.zeros(g32), PhysicalParams(g32), default_basis(g32), math.inf, 0.01, [0.0])


class TestConvergence:
    def test_heun_is_second_order(self):
        g = TorusGrid(16)
        X, _ = g.coords()
        p = PhysicalParams(g, coriolis_f=0.0, nu=0.1)
        a0 = State(g, np.stack([0 * X, 0.3 * np.sin(X), np.ones(g.shape)]))
        errs, dts = [], [0.1, 0.05, 0.025, 0.0125]
        for dt in dts:
            rec = integrate(a0, p, NoiseBasis(g, ()), IntegrationConfig(scheme="heun_strat", T=1.0, dt=dt))
            errs.append(np.max(np.abs(rec.states[-1][1] - 0.3 * np.sin(X) * math.exp(-0.1))))
        slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
        assert 1.9 <= slope <= 2.1

    def test_strong_and_cross_scheme_convergence(self, g32):
        p = PhysicalParams(g32, froude=10.0)
        b = default_basis(g32)
        a0 = small_state(g32)
        T, nf = 0.5, 1024
        fine = T / nf
        path = sample_path(b, fine, nf, 5)

        def run(scheme, dt):
            cfg = IntegrationConfig(scheme=scheme, T=T, dt=dt)
            return integrate(a0, p, b, cfg, path=path.coarsen(int(round(dt / fine)))).states[-1]

        dts = [T / 32, T / 64, T / 128, T / 256]
        ref = run("em_ito", fine)
        em = [run("em_ito", d) for d in dts]
        self_err = [l2(g32, x - ref) for x in em]
        cross = [l2(g32, x - run("heun_strat", d)) for x, d in zip(em, dts)]
        s1 = np.polyfit(np.log(dts), np.log(self_err), 1)[0]
        s2 = np.polyfit(np.log(dts), np.log(cross), 1)[0]
        assert 0.4 <= s1 <= 1.1
        assert s2 >= 0.4


class TestIntegrate:
    def test_rest_state_fixed_both_schemes(self, g32):
        p = PhysicalParams(g32)
        rest = State(g32, np.stack([g32.zeros(), g32.zeros(), np.full(g32.shape, 1.0)]))
        for scheme in ("em_ito", "heun_strat"):
            rec = integrate(rest, p, NoiseBasis(g32, ()), IntegrationConfig(scheme=scheme, T=1.0, dt=1e-3))
            assert np.max(np.abs(rec.states[-1] - rest.data)) < 1e-12

    @pytest.mark.parametrize("scheme", ["em_ito", "heun_strat"])
    @pytest.mark.parametrize("viscous", ["explicit", "integrating_factor"])
    def test_mass_conserved(self, g32, scheme, viscous):
        p = PhysicalParams(g32, froude=10.0)
        cfg = IntegrationConfig(scheme=scheme, T=1.0, dt=1e-3, viscous=viscous)
        rec = integrate(small_state(g32), p, default_basis(g32), cfg, seed=3)
        assert np.max(np.abs(rec.mass - rec.mass[0])) <= 1e-10 * abs(rec.mass[0])

    def test_small_data_decays(self, g32):
        p = PhysicalParams(g32)
        a0 = small_state(g32, norm=1e-3, h_mean=0.0)
        rec = integrate(a0, p, NoiseBasis(g32, ()), IntegrationConfig(T=1.0, dt=0.01))
        assert rec.norm12[-1] < rec.norm12[0]

    def test_tau_R_zero_when_start_above(self, g32):
        cfg = IntegrationConfig(T=0.1, dt=0.01, monitor_R=(0.1,))
        rec = integrate(small_state(g32, norm=0.5, h_mean=0.0), PhysicalParams(g32), default_basis(g32), cfg)
        assert rec.tau_R_hits[0.1] == 0.0

    def test_monitor_ordering(self, g32):
        cfg = IntegrationConfig(T=0.5, dt=0.01, monitor_R=(0.3,), monitor_M=(0.3, 0.6, 0.9))
        rec = integrate(small_state(g32, norm=0.5, h_mean=0.0), PhysicalParams(g32), default_basis(g32), cfg,
                        seed=1)
        sup = np.maximum.accumulate(rec.norm12)
        for m, hit in rec.tau_hat_M_hits.items():
            plain = rec.times[np.argmax(sup >= m)] if np.any(sup >= m) else None
            if hit is not None and plain is not None:
                assert hit <= plain
        assert np.all(rec.t22 >= sup - 1e-15)

    def test_determinism(self, g32):
        cfg = IntegrationConfig(scheme="heun_strat", T=0.2, dt=0.01)
        a, p, b = small_state(g32), PhysicalParams(g32), default_basis(g32)
        r1, r2 = integrate(a, p, b, cfg, seed=9), integrate(a, p, b, cfg, seed=9)
        assert np.array_equal(r1.states, r2.states) and np.array_equal(r1.t22, r2.t22)
        r3 = integrate(a, p, b, cfg, path=sample_path(b, 0.01, 20, 9))
        assert np.array_equal(r1.states, r3.states)

    def test_truncation_is_bitwise_below_R(self, g32):
        a, p, b = small_state(g32, norm=0.2), PhysicalParams(g32), default_basis(g32)
        cfg = IntegrationConfig(T=0.2, dt=0.01)
        full = integrate(a, p, b, cfg, seed=2)
        trunc = integrate(a, p, b, cfg.with_(R=10.0), seed=2)
        assert np.max(full.norm12) < 10.0
        assert np.array_equal(full.states, trunc.states)

    def test_blowup_detected(self, g32):
        cfg = IntegrationConfig(T=20.0, dt=2.0, check_stability=False, ceiling=50.0)
        rec = integrate(small_state(g32), PhysicalParams(g32), NoiseBasis(g32, ()), cfg)
        assert rec.blown_up and rec.abort_reason
        assert rec.last_finite_time < 20.0
        assert rec.state_times[-1] == rec.last_finite_time

    def test_stability_enforced(self, g32):
        with pytest.raises(StabilityError):
            integrate(small_state(g32), PhysicalParams(g32), NoiseBasis(g32, ()), IntegrationConfig(T=1.0, dt=0.5))

    def test_path_validated(self, g32):
        cfg = IntegrationConfig(T=0.1, dt=0.01)
        with pytest.raises(ValueError):
            integrate(small_state(g32), PhysicalParams(g32), default_basis(g32), cfg, path=zero_path(8, 0.01, 5))

    def test_record_every_and_csv(self, g32, tmp_path):
        cfg = IntegrationConfig(T=0.1, dt=0.01, record_every=4)
        rec = integrate(small_state(g32), PhysicalParams(g32), default_basis(g32), cfg)
        assert list(rec.state_times) == pytest.approx([0.0, 0.04, 0.08, 0.1])
        assert rec.times.size == 11
        rec.to_csv(tmp_path / "n.csv")
        header, data = read_csv(tmp_path / "n.csv")
        assert tuple(header) == CSV_COLUMNS and data.shape == (11, 6)
        assert np.array_equal(data[:, 1], rec.norm12)
        assert math.isclose(rec.norm12[0], norm12_additive(g32, small_state(g32).data), rel_tol=1e-12)
