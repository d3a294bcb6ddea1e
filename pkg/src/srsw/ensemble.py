"""Ensemble orchestration: per-member seeds, a worker pool and order-independent aggregation."""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import RunConfig, parse_config
from .estimates import stayed_below, wilson_interval
from .io import write_csv, write_json
from .stepper import integrate


def member_seed(base_seed: int, index: int) -> int:
    """Stable 63-bit seed for ensemble member ``index``."""
    digest = hashlib.sha256(f"{int(base_seed)}:{int(index)}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def _row_header(cfg: RunConfig) -> list[str]:
    cols = ["index", "seed", "blown_up", "stayed"]
    cols += [f"tau_R_{r!r}" for r in cfg.integration.monitor_R]
    cols += [f"tau_hat_M_{m!r}" for m in cfg.integration.monitor_M]
    cols += ["final_time", "final_norm12", "sup_norm12", "final_t22", "mass_drift"]
    return cols


def run_member(cfg: RunConfig, index: int) -> list:
    seed = member_seed(cfg.ensemble.base_seed, index)
    rec = integrate(cfg.initial, cfg.params, cfg.basis, cfg.integration, seed=seed, chash=cfg.hash)
    row = [index, seed, rec.blown_up, stayed_below(rec, cfg.ensemble.C)]
    row += [rec.tau_R_hits[r] for r in cfg.integration.monitor_R]
    row += [rec.tau_hat_M_hits[m] for m in cfg.integration.monitor_M]
    row += [float(rec.times[-1]), float(rec.norm12[-1]), float(np.max(rec.norm12)), float(rec.t22[-1]),
            float(rec.mass[-1] - rec.mass[0])]
    return row


def _worker(args) -> list:
    raw, base_dir, index = args
    return run_member(parse_config(raw, base_dir), index)


def run_rows(cfg: RunConfig, workers: Optional[int] = None) -> list[list]:
    """Run every member and return rows sorted by member index."""
    workers = cfg.ensemble.workers if workers is None else workers
    indices = range(cfg.ensemble.paths)
    if workers <= 1:
        rows = [run_member(cfg, i) for i in indices]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_worker, [(cfg.raw, cfg.base_dir, i) for i in indices]))
    return sorted(rows, key=lambda r: r[0])


def aggregate(cfg: RunConfig, rows: Sequence[list]) -> dict:
    """Summary statistics recomputable from the rows alone (independent of their order)."""
    rows = sorted(rows, key=lambda r: r[0])
    header = _row_header(cfg)
    col = {name: i for i, name in enumerate(header)}
    paths = len(rows)
    stay = sum(bool(r[col["stayed"]]) for r in rows)
    blown = sum(bool(r[col["blown_up"]]) for r in rows)
    lo, hi = wilson_interval(stay, paths)

    def stats(name):
        x = np.array([r[col[name]] for r in rows], dtype=float)
        return {"mean": float(np.mean(x)), "q05": float(np.quantile(x, 0.05)),
                "q50": float(np.quantile(x, 0.5)), "q95": float(np.quantile(x, 0.95))}

    taus = {}
    for name in header:
        if name.startswith("tau_"):
            hits = [r[col[name]] for r in rows if r[col[name]] is not None]
            taus[name] = {"hit_fraction": len(hits) / paths if paths else 0.0,
                          "mean_hit_time": float(np.mean(hits)) if hits else None}
    return {
        "config_hash": cfg.hash,
        "base_seed": cfg.ensemble.base_seed,
        "paths": paths,
        "C": cfg.ensemble.C,
        "staying_probability": {"estimate": stay / paths if paths else 0.0, "ci_low": lo, "ci_high": hi,
                                "confidence": 0.95, "staying": stay},
        "blowup_fraction": blown / paths if paths else 0.0,
        "final_norm12": stats("final_norm12"),
        "sup_norm12": stats("sup_norm12"),
        "final_t22": stats("final_t22"),
        "tau": taus,
    }


def run_ensemble(cfg: RunConfig, out_dir: Path | str, workers: Optional[int] = None) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = run_rows(cfg, workers)
    write_csv(out_dir / "rows.csv", _row_header(cfg), rows)
    agg = aggregate(cfg, rows)
    write_json(out_dir / "aggregate.json", agg)
    return agg
