"""Tests for persistence helpers and configuration parsing."""

import copy
import json
import math
from pathlib import Path

import numpy as np
import pytest

from srsw.config import ConfigError, load_config, parse_config
from srsw.grid import TorusGrid
from srsw.io import (canonical_json, config_hash, fmt, load_array, load_snapshot, read_csv, save_array,
                     save_snapshot, write_csv, write_json)
from srsw.state import norm12_additive

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BASE = {
    "grid": {"n": 32},
    "params": {"froude": 10.0},
    "basis": {"K": 4},
    "ic": {"terms": [{"component": "v1", "kind": "sin", "k": [0, 1], "amplitude": 0.1}], "h_mean": 1.0},
    "T": 0.1, "dt": 0.01,
}


def cfg(**changes):
    raw = copy.deepcopy(BASE)
    raw.update(changes)
    return raw


class TestIO:
    def test_snapshot_bit_exact(self, tmp_path, rng):
        g = TorusGrid(16)
        comps = {"v1": rng.standard_normal(g.shape), "h": rng.standard_normal(g.shape)}
        save_snapshot(tmp_path / "s", g, comps, time=0.5, seed=3)
        g2, back, meta = load_snapshot(tmp_path / "s")
        assert g2 == g and meta["components"] == ["v1", "h"] and meta["seed"] == 3
        for k in comps:
            assert back[k].tobytes() == comps[k].tobytes()
        assert (tmp_path / "s.bin").stat().st_size == 2 * 16 * 16 * 8

    def test_snapshot_little_endian_row_major(self, tmp_path):
        g = TorusGrid(8)
        f = np.arange(64, dtype=float).reshape(8, 8)
        save_snapshot(tmp_path / "s", g, {"h": f})
        raw = np.frombuffer((tmp_path / "s.bin").read_bytes(), dtype="<f8")
        assert np.array_equal(raw, f.ravel())

    def test_snapshot_size_check(self, tmp_path):
        g = TorusGrid(8)
        save_snapshot(tmp_path / "s", g, {"h": np.zeros(g.shape)})
        (tmp_path / "s.bin").write_bytes(b"\0" * 8)
        with pytest.raises(ValueError):
            load_snapshot(tmp_path / "s")
        with pytest.raises(ValueError):
            save_snapshot(tmp_path / "t", g, {"h": np.zeros((4, 4))})

    def test_array_round_trip(self, tmp_path, rng):
        a = rng.standard_normal((2, 3, 4))
        save_array(tmp_path / "a", a, {"kind": "test"})
        back, meta = load_array(tmp_path / "a")
        assert np.array_equal(a, back) and meta["kind"] == "test"

    def test_csv_formatting(self, tmp_path):
        assert fmt(True) == "1" and fmt(None) == "" and fmt(3) == "3" and fmt(0.1) == "0.1"
        write_csv(tmp_path / "x.csv", ["a", "b"], [[1, 0.1], [None, math.pi]])
        header, data = read_csv(tmp_path / "x.csv")
        assert header == ["a", "b"] and math.isnan(data[1, 0]) and data[1, 1] == math.pi

    def test_hash_is_key_order_independent(self):
        assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
        assert canonical_json({"x": math.inf}) == '{"x":"inf"}'

    def test_write_json_sorted(self, tmp_path):
        write_json(tmp_path / "j.json", {"b": 1, "a": np.float64(2.0)})
        assert list(json.loads((tmp_path / "j.json").read_text())) == ["a", "b"]


class TestConfig:
    def test_valid(self):
        c = parse_config(cfg())
        assert c.grid.n == 32 and c.basis.K == 4 and c.integration.steps == 10
        assert math.isclose(c.initial.h.mean(), 1.0)
        assert c.params.froude == 10.0 and math.isinf(c.integration.R)

    def test_shipped_configs_parse(self):
        for path in sorted(CONFIGS.glob("*.json")):
            assert load_config(path).hash

    @pytest.mark.parametrize("raw,field", [
        (cfg(bogus=1), "bogus"),
        (cfg(dt=-0.1), "dt"),
        (cfg(dt="x"), "dt"),
        (cfg(T=0.105), "T"),
        (cfg(scheme="rk4"), "scheme"),
        (cfg(grid={"n": 31}), "grid.n"),
        (cfg(params={"nu": 0}), "params.nu"),
        (cfg(ic={"terms": [{"component": "w", "kind": "sin", "k": [1, 0], "amplitude": 1}]}), "ic.terms[0].component"),
        (cfg(ic={"terms": [{"component": "h", "kind": "sin", "k": [40, 0], "amplitude": 1}]}), "ic.terms[0].k"),
        (cfg(ic={"terms": [{"component": "h", "kind": "sin", "k": [1, 0]}]}), "ic.terms[0].amplitude"),
        (cfg(monitors={"R": [-1]}), "monitors.R"),
        (cfg(picard={"alpha": 0.7}), "picard.alpha"),
        (cfg(ensemble={"paths": 0}), "ensemble.paths"),
    ])
    def test_errors_name_the_field(self, raw, field):
        with pytest.raises(ConfigError) as exc:
            parse_config(raw)
        assert exc.value.field == field

    def test_missing_dt(self):
        raw = cfg()
        del raw["dt"]
        with pytest.raises(ConfigError, match="dt"):
            parse_config(raw)

    def test_normalisation(self):
        c = parse_config(cfg(ic={**BASE["ic"], "normalize_norm12": 0.25}))
        assert math.isclose(norm12_additive(c.grid, c.initial.data), 0.25, rel_tol=1e-12)

    def test_snapshot_ic(self, tmp_path):
        c = parse_config(cfg())
        save_snapshot(tmp_path / "ic", c.grid, {"v1": c.initial.v[0], "v2": c.initial.v[1], "h": c.initial.h})
        c2 = parse_config(cfg(ic={"snapshot": "ic"}), tmp_path)
        assert np.allclose(c2.initial.data, c.initial.data, atol=1e-14)
        save_snapshot(tmp_path / "bad", TorusGrid(16), {"h": np.zeros((16, 16))})
        with pytest.raises(ConfigError, match="ic.snapshot"):
            parse_config(cfg(ic={"snapshot": "bad"}), tmp_path)

    def test_load_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")
        (tmp_path / "bad.json").write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(tmp_path / "bad.json")

    def test_seed_override_changes_hash(self):
        c = parse_config(cfg(seed=1))
        assert c.with_seed(2).hash != c.hash and c.with_seed(2).seed == 2
