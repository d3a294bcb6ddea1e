"""
JSON run configuration.

Example::

    {
      "grid": {"n": 64, "length": 6.283185307179586},
      "params": {"epsilon": 1.0, "f": 1.0, "froude": 1.0, "nu": 0.1, "eta": 0.1},
      "basis": {"K": 8, "A": 0.05, "s": 3},
      "ic": {"terms": [{"component": "v1", "kind": "sin", "k": [0, 1], "amplitude": 0.1}],
             "h_mean": 0.0, "normalize_norm12": 0.1},
      "scheme": "em_ito", "T": 1.0, "dt": 0.01, "R": "inf",
      "monitors": {"R": [1.0], "M": [10.0], "ceiling": 1e6},
      "ensemble": {"paths": 16, "base_seed": 0, "workers": 1, "C": 1.0},
      "picard": {"tol": 1e-8, "max_iter": 20},
      "seed": 0
    }

``ic`` may instead be ``{"snapshot": "<stem>"}`` (a saved state) or
``{"rest": true, "h_mean": 1.0}``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .grid import TorusGrid
from .io import config_hash, load_snapshot
from .noise import NoiseBasis, basis_from_spec
from .state import PhysicalParams, State, norm12_additive
from .stepper import SCHEMES, VISCOUS_MODES, IntegrationConfig

TOP_LEVEL = {"grid", "params", "basis", "ic", "scheme", "T", "dt", "R", "viscous", "monitors",
             "record_every", "ensemble", "picard", "output", "seed"}
COMPONENTS = {"v1": 0, "v2": 1, "h": 2}
KINDS = ("cos", "sin", "const")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry (dotted path)."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _get(section: dict, key: str, path: str, kind=float, default: Any = ..., positive=False):
    if key not in section:
        if default is ...:
            raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
        return default
    value = section[key]
    name = f"{path}.{key}" if path else key
    try:
        if kind is float:
            if isinstance(value, str) and value.lower() in ("inf", "infinity"):
                value = math.inf
            elif isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError
            value = float(value)
            if math.isnan(value):
                raise TypeError
        elif kind is int:
            if isinstance(value, bool) or int(value) != value:
                raise TypeError
            value = int(value)
        elif kind is str:
            if not isinstance(value, str):
                raise TypeError
        elif kind is bool:
            if not isinstance(value, bool):
                raise TypeError
    except (TypeError, ValueError):
        raise ConfigError(name, f"expected {kind.__name__}, got {value!r}") from None
    if positive and not value > 0:
        raise ConfigError(name, f"must be positive, got {value!r}")
    return value


def _section(raw: dict, key: str) -> dict:
    sec = raw.get(key, {})
    if sec is None:
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(key, f"expected an object, got {type(sec).__name__}")
    return sec


@dataclass
class EnsembleSettings:
    paths: int = 1
    base_seed: int = 0
    workers: int = 1
    C: float = 1.0


@dataclass
class PicardSettings:
    tol: float = 1e-8
    max_iter: int = 20
    alpha: float = 0.25
    p: float = 4.0


@dataclass
class RunConfig:
    raw: dict
    grid: TorusGrid
    params: PhysicalParams
    basis: NoiseBasis
    initial: State
    integration: IntegrationConfig
    ensemble: EnsembleSettings
    picard: PicardSettings
    seed: int = 0
    snapshots: bool = False
    base_dir: Optional[Path] = field(default=None, repr=False)

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def with_seed(self, seed: int) -> "RunConfig":
        raw = dict(self.raw)
        raw["seed"] = int(seed)
        return RunConfig(raw, self.grid, self.params, self.basis, self.initial, self.integration,
                         self.ensemble, self.picard, int(seed), self.snapshots, self.base_dir)


def _build_ic(sec: dict, grid: TorusGrid, base_dir: Optional[Path]) -> State:
    if "snapshot" in sec:
        stem = Path(_get(sec, "snapshot", "ic", str))
        if base_dir is not None and not stem.is_absolute():
            stem = base_dir / stem
        try:
            sgrid, comps, _ = load_snapshot(stem)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError("ic.snapshot", f"cannot load snapshot: {exc}") from None
        if sgrid != grid:
            raise ConfigError("ic.snapshot", f"snapshot grid n={sgrid.n} does not match config grid n={grid.n}")
        missing = [c for c in COMPONENTS if c not in comps]
        if missing:
            raise ConfigError("ic.snapshot", f"snapshot lacks components {missing}")
        data = np.stack([comps["v1"], comps["v2"], comps["h"]])
        return State(grid, grid.dealias(data))

    data = grid.zeros(3)
    data[2] += _get(sec, "h_mean", "ic", float, 0.0)
    terms = sec.get("terms", [])
    if not isinstance(terms, list):
        raise ConfigError("ic.terms", "expected a list")
    X, Y = grid.coords()
    scale = 2.0 * math.pi / grid.length
    limit = grid.max_resolved_wavenumber
    for i, term in enumerate(terms):
        path = f"ic.terms[{i}]"
        if not isinstance(term, dict):
            raise ConfigError(path, "expected an object")
        comp = _get(term, "component", path, str)
        if comp not in COMPONENTS:
            raise ConfigError(f"{path}.component", f"must be one of {sorted(COMPONENTS)}, got {comp!r}")
        kind = _get(term, "kind", path, str)
        if kind not in KINDS:
            raise ConfigError(f"{path}.kind", f"must be one of {KINDS}, got {kind!r}")
        amp = _get(term, "amplitude", path, float)
        if kind == "const":
            data[COMPONENTS[comp]] += amp
            continue
        k = term.get("k")
        if not (isinstance(k, list) and len(k) == 2 and all(isinstance(x, int) and not isinstance(x, bool) for x in k)):
            raise ConfigError(f"{path}.k", f"expected two integers, got {k!r}")
        if max(abs(k[0]), abs(k[1])) > limit:
            raise ConfigError(f"{path}.k", f"wavevector {k} lies outside the resolved band |k| <= {limit}")
        theta = scale * (k[0] * X + k[1] * Y)
        data[COMPONENTS[comp]] += amp * (np.cos(theta) if kind == "cos" else np.sin(theta))
    if "normalize_norm12" in sec:
        target = _get(sec, "normalize_norm12", "ic", float)
        if target < 0:
            raise ConfigError("ic.normalize_norm12", "must be >= 0")
        current = norm12_additive(grid, data)
        if current == 0 and target > 0:
            raise ConfigError("ic.normalize_norm12", "cannot normalise a zero initial state")
        if current > 0:
            data *= target / current
    return State(grid, data)


def parse_config(raw: dict, base_dir: Optional[Path] = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    unknown = sorted(set(raw) - TOP_LEVEL)
    if unknown:
        raise ConfigError(unknown[0], "unknown field")

    g = _section(raw, "grid")
    n = _get(g, "n", "grid", int, 64)
    length = _get(g, "length", "grid", float, 2 * math.pi, positive=True)
    try:
        grid = TorusGrid(n, length)
    except ValueError as exc:
        raise ConfigError("grid.n", str(exc)) from None

    p = _section(raw, "params")
    kwargs = {}
    for key, name in (("epsilon", "epsilon"), ("froude", "froude"), ("nu", "nu"), ("eta", "eta")):
        kwargs[name] = _get(p, key, "params", float, 0.1 if key in ("nu", "eta") else 1.0, positive=True)
    kwargs["coriolis_f"] = _get(p, "f", "params", float, 1.0)
    params = PhysicalParams(grid, **kwargs)

    bspec = raw.get("basis", {"K": 8, "A": 0.05, "s": 3.0})
    if bspec is not None and not isinstance(bspec, dict):
        raise ConfigError("basis", "expected an object or null")
    if bspec and "modes" not in bspec:
        _get(bspec, "K", "basis", int, 8)
        _get(bspec, "A", "basis", float, 0.05, positive=True)
        _get(bspec, "s", "basis", float, 3.0)
    try:
        basis = basis_from_spec(grid, bspec)
    except (ValueError, TypeError) as exc:
        raise ConfigError("basis", str(exc)) from None

    initial = _build_ic(_section(raw, "ic"), grid, base_dir)

    scheme = _get(raw, "scheme", "", str, "em_ito")
    if scheme not in SCHEMES:
        raise ConfigError("scheme", f"must be one of {SCHEMES}, got {scheme!r}")
    viscous = _get(raw, "viscous", "", str, "explicit")
    if viscous not in VISCOUS_MODES:
        raise ConfigError("viscous", f"must be one of {VISCOUS_MODES}, got {viscous!r}")
    T = _get(raw, "T", "", float, 1.0)
    if not T >= 0:
        raise ConfigError("T", "must be >= 0")
    dt = _get(raw, "dt", "", float, positive=True)
    R = _get(raw, "R", "", float, math.inf, positive=True)
    mon = _section(raw, "monitors")
    for key in ("R", "M"):
        vals = mon.get(key, [])
        if not isinstance(vals, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) and x > 0 for x in vals):
            raise ConfigError(f"monitors.{key}", "expected a list of positive numbers")
    ceiling = _get(mon, "ceiling", "monitors", float, 1e6, positive=True)
    record_every = _get(raw, "record_every", "", int, 1, positive=True)
    try:
        integration = IntegrationConfig(scheme=scheme, T=T, dt=dt, R=R, monitor_R=tuple(mon.get("R", [])),
                                        monitor_M=tuple(mon.get("M", [])), ceiling=ceiling,
                                        record_every=record_every, viscous=viscous)
    except ValueError as exc:
        raise ConfigError("T" if "multiple" in str(exc) else "dt", str(exc)) from None

    e = _section(raw, "ensemble")
    ens = EnsembleSettings(
        paths=_get(e, "paths", "ensemble", int, 1, positive=True),
        base_seed=_get(e, "base_seed", "ensemble", int, 0),
        workers=_get(e, "workers", "ensemble", int, 1, positive=True),
        C=_get(e, "C", "ensemble", float, 1.0, positive=True),
    )
    pc = _section(raw, "picard")
    pic = PicardSettings(
        tol=_get(pc, "tol", "picard", float, 1e-8, positive=True),
        max_iter=_get(pc, "max_iter", "picard", int, 20, positive=True),
        alpha=_get(pc, "alpha", "picard", float, 0.25),
        p=_get(pc, "p", "picard", float, 4.0),
    )
    if not 0 <= pic.alpha < 0.5:
        raise ConfigError("picard.alpha", "must lie in [0, 1/2)")
    if not pic.p > 2:
        raise ConfigError("picard.p", "must exceed 2")
    out = _section(raw, "output")
    snapshots = _get(out, "snapshots", "output", bool, False)
    seed = _get(raw, "seed", "", int, 0)
    return RunConfig(raw, grid, params, basis, initial, integration, ens, pic, seed, snapshots, base_dir)


def load_config(path: Path | str) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    return parse_config(raw, path.parent)
