"""
Command-line entry point.

    srsw simulate  --config run.json --out dir [--seed N] [--quiet]
    srsw picard    --config run.json --out dir
    srsw ensemble  --config run.json --out dir
    srsw verify    --suite advective|growth|envelope|continuity|all --out dir

Exit codes: 0 success, 1 configuration error or unknown suite, 2 blow-up,
3 Picard non-convergence, 4 a verification report failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, RunConfig, load_config
from .io import save_snapshot, write_json
from .stepper import StabilityError, check_stability, integrate

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BLOWUP = 2
EXIT_NO_CONVERGENCE = 3
EXIT_VERIFY_FAILED = 4

SUITE_NAMES = ("advective", "growth", "envelope", "continuity", "all")


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    i = cfg.integration
    if i.check_stability:
        check_stability(cfg.params, cfg.basis, cfg.initial.data, i.dt, i.viscous)
    return cfg


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rec = integrate(cfg.initial, cfg.params, cfg.basis, cfg.integration, seed=cfg.seed, chash=cfg.hash)
    rec.to_csv(out / "norms.csv")
    rec.to_json(out / "record.json", {"config": cfg.raw})
    final = rec.states[-1]
    save_snapshot(out / "final_state", cfg.grid, {"v1": final[0], "v2": final[1], "h": final[2]},
                  float(rec.state_times[-1]), cfg.seed, {"config_hash": cfg.hash})
    if cfg.snapshots:
        rec.save_snapshots(out / "snapshots")
    if rec.blown_up:
        _say(args, f"blow-up: {rec.abort_reason}; last finite time {rec.last_finite_time}")
        return EXIT_BLOWUP
    _say(args, f"completed T={cfg.integration.T} in {rec.times.size - 1} steps; "
               f"final norm12={rec.norm12[-1]:.6g}")
    return EXIT_OK


def cmd_picard(args) -> int:
    from .noise import sample_path
    from .picard import picard_solve

    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    icfg = cfg.integration.with_(scheme="em_ito", record_every=1)
    path = sample_path(cfg.basis.K, icfg.dt, icfg.steps, cfg.seed)
    res = picard_solve(cfg.initial, path, cfg.params, cfg.basis, icfg, tol=cfg.picard.tol,
                       max_iter=cfg.picard.max_iter, alpha=cfg.picard.alpha, p=cfg.picard.p)
    res.to_csv(out / "picard.csv")
    write_json(out / "picard.json", {**res.summary(), "config_hash": cfg.hash, "seed": cfg.seed,
                                      "config": cfg.raw})
    if not res.converged:
        _say(args, f"no convergence within {cfg.picard.max_iter} iterations; "
                   f"last distance {res.distances[-1]:.3e}")
        return EXIT_NO_CONVERGENCE
    _say(args, f"converged after {len(res.iterates)} iterations; "
               f"residual vs direct solve {res.residual_vs_direct}")
    return EXIT_OK


def cmd_ensemble(args) -> int:
    from .ensemble import run_ensemble

    cfg = _load(args)
    if args.seed is not None:
        cfg.ensemble.base_seed = int(args.seed)
        cfg.raw["ensemble"] = {**cfg.raw.get("ensemble", {}), "base_seed": int(args.seed)}
    agg = run_ensemble(cfg, args.out, args.workers)
    sp = agg["staying_probability"]
    _say(args, f"{agg['paths']} paths; staying probability {sp['estimate']:.3f} "
               f"[{sp['ci_low']:.3f}, {sp['ci_high']:.3f}]; blow-up fraction {agg['blowup_fraction']:.3f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .estimates import run_suite, summary_table

    if args.suite not in SUITE_NAMES:
        print(f"unknown suite {args.suite!r}; choose from {', '.join(SUITE_NAMES)}", file=sys.stderr)
        return EXIT_CONFIG
    overrides = {}
    if args.config:
        try:
            overrides = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("<file>", str(exc)) from None
        if not isinstance(overrides, dict):
            raise ConfigError("<root>", "verify overrides must be an object keyed by suite name")
    reports = run_suite(args.suite, **overrides)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for rep in reports:
        rep.to_json(out / f"{rep.id}.json")
    table = summary_table(reports)
    (out / "summary.txt").write_text(table + "\n")
    _say(args, table)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VERIFY_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srsw", description=__doc__.split("\n\n")[0].strip())
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON configuration file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")

    common(sub.add_parser("simulate", help="integrate one trajectory"))
    common(sub.add_parser("picard", help="run the Picard approximating sequence"))
    ens = sub.add_parser("ensemble", help="run an ensemble of independent paths")
    common(ens)
    ens.add_argument("--workers", type=int, default=None, help="override the worker count")
    ver = sub.add_parser("verify", help="run an estimate verification suite")
    common(ver, config_required=False)
    ver.add_argument("--suite", required=True, help="|".join(SUITE_NAMES))
    return parser


COMMANDS = {"simulate": cmd_simulate, "picard": cmd_picard, "ensemble": cmd_ensemble, "verify": cmd_verify}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error in {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StabilityError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
