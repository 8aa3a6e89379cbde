"""Command-line entry point.

Commands: ``validate``, ``run``, ``verify``, ``oracle-check``, ``revenue``.
Exit codes: 0 all checks passed, 1 a check failed, 2 bad input.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dist, plots, verify
from .baselines import ReserveAlwaysAuction
from .config import SCHEMA_VERSION, ExperimentConfig, load_config, load_profile, profile_to_dict
from .errors import CapacityError, ConfigError, FlexAuctionError
from .fixtures import random_instance
from .mechanism import OptimalAuction, run_auction

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def _dump(obj) -> str:
    return json.dumps(verify._jsonable(obj), indent=2) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    for name in ("seed", "samples", "trials", "tie_break", "workers", "out", "payment_rule"):
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = value
    return replace(cfg, **changes)


def _mechanism(cfg: ExperimentConfig):
    cls = ReserveAlwaysAuction if cfg.payment_rule == "reserve" else OptimalAuction
    return cls(cfg.models, cfg.structure, tie_break=cfg.tie_break)


def cmd_validate(cfg: ExperimentConfig, args) -> int:
    consumers = []
    passed = True
    for idx, model in enumerate(cfg.models):
        hz = dist.validate_hazard(model, args.grid_points)
        neg = dist.validate_negative_reserve(model)
        consumers.append(
            {
                "consumer": idx,
                "consumer_id": model.consumer_id,
                "hazard": {
                    "weak_ok": hz.weak_ok,
                    "strict_ok": hz.strict_ok,
                    "worst_violation": {
                        "levels": list(hz.worst_violation[0]),
                        "thetas": list(hz.worst_violation[1]),
                        "magnitude": hz.worst_violation[2],
                    },
                    "grid_resolution": hz.grid_resolution,
                },
                "negative_reserve": list(neg),
                "reserve_prices": [dist.reserve_price(model, lvl) for lvl in range(1, model.k + 1)],
            }
        )
        if not hz.weak_ok or not all(neg):
            passed = False
        if hz.weak_ok and not hz.strict_ok:
            print(f"warning: consumer {idx} meets the hazard condition only weakly", file=sys.stderr)
        if not hz.weak_ok:
            print(f"error: consumer {idx} fails the monotone hazard condition", file=sys.stderr)
        for lvl, ok in enumerate(neg, start=1):
            if not ok:
                print(f"error: consumer {idx} has a nonnegative virtual valuation at theta_min on level {lvl}", file=sys.stderr)
    _emit(_dump({"schema_version": SCHEMA_VERSION, "command": "validate", "passed": passed, "consumers": consumers}), cfg.out)
    return EXIT_OK if passed else EXIT_FAIL


def outcome_record(cfg: ExperimentConfig, profile, outcome) -> dict:
    th = outcome.thresholds
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "run",
        "structure": {"m": list(cfg.structure.m)},
        "profile": profile_to_dict(profile),
        "winners": list(outcome.winners),
        "allocation": [{"consumer": l, "good": outcome.good_of(l)} for l in outcome.winners],
        "payments": list(outcome.payments),
        "revenue": outcome.revenue,
        "virtual_valuations": list(outcome.virtual_valuations),
        "thresholds": {
            "w_thr": list(th.w_thr),
            "theta_thr": list(th.theta_thr),
            "unreachable": sorted(th.unreachable),
            "n_plus": list(th.n_plus),
            "r_star": list(th.r_star),
        },
        "trace": [
            {"level": it.level, "candidates": list(it.candidates), "r_star": it.r_star, "w_thr": it.w_thr, "removed": list(it.removed)}
            for it in outcome.trace
        ],
    }


def cmd_run(cfg: ExperimentConfig, args) -> int:
    if not args.profile:
        raise ConfigError("run needs --profile")
    profile = load_profile(args.profile)
    mech = _mechanism(cfg)
    rng = np.random.default_rng(cfg.seed) if cfg.tie_break == "random" else None
    outcome = run_auction(mech.models, mech.structure, profile, cfg.tie_break, rng)
    _emit(_dump(outcome_record(cfg, profile, outcome)), cfg.out)
    return EXIT_OK


def _oracle_instances(cfg: ExperimentConfig, seed: int, count: int):
    o = cfg.oracle
    if o.max_consumers > 12 or o.max_goods > 12:
        raise CapacityError(
            f"oracle limits N={o.max_consumers}, M={o.max_goods} exceed the brute-force guard; use N, M <= 12"
        )
    rng = verify.rng_stream(seed, 11)
    for _ in range(count):
        yield random_instance(rng, o.max_consumers, o.max_goods, o.max_levels)


def oracle_reports(cfg: ExperimentConfig, seed: int) -> list:
    reports = [
        verify.check_removal_grid(),
        verify.check_oracle_equivalence(_oracle_instances(cfg, seed, cfg.oracle.instances)),
        verify.check_payments(_oracle_instances(cfg, seed, cfg.oracle.payment_instances)),
    ]
    if cfg.models and cfg.oracle.payment_instances and len(cfg.models) <= 12:
        inst = verify.sampled_instances(cfg.models, cfg.structure, cfg.oracle.payment_instances, seed)
        reports.append(replace(verify.check_payments(inst), check="payments-critical-bid[config]"))
    return reports


def _consumer_task(args):
    mech, consumer, samples, seed, grid_points, fine_points = args
    model = mech.models[consumer]
    lo, hi = model.support
    grid = tuple(float(lo + (hi - lo) * q) for q in np.arange(1, grid_points + 1) / (grid_points + 1))
    return verify.consumer_checks(mech, consumer, samples, seed, grid, fine_points)


def _write_report(reports, out: str | None) -> None:
    lines = [json.dumps(r.to_record()) for r in reports]
    summary = {
        "summary": True,
        "passed": all(r.passed for r in reports),
        "checks": len(reports),
        "failed": [r.check for r in reports if not r.passed],
    }
    lines.append(json.dumps(summary))
    _emit("\n".join(lines) + "\n", out)


def _print_summary(reports) -> None:
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.check}", file=sys.stderr)


def cmd_verify(cfg: ExperimentConfig, args) -> int:
    seed = cfg.require_seed()
    mech = _mechanism(cfg)
    reports = oracle_reports(cfg, seed)
    if cfg.models:
        reports.append(verify.check_ir_expost(None, None, cfg.trials, seed, mech))
        reports.append(verify.check_revenue_identity(None, None, cfg.trials, seed, mech))
        tasks = [(mech, i, cfg.samples, seed, cfg.grid_points, cfg.fine_points) for i in range(len(cfg.models))]
        if cfg.workers > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(_consumer_task, tasks))
        else:
            results = [_consumer_task(t) for t in tasks]
        for consumer, (checks, table) in enumerate(results):
            reports.extend(checks)
            if cfg.out and not args.no_figures:
                plots.plot_interim(
                    table, mech.models[consumer], plots.figure_dir(cfg.out) / f"interim_consumer{consumer}.png",
                    f"consumer {consumer} ({mech.name} payments)",
                )
    _write_report(reports, cfg.out)
    _print_summary(reports)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def cmd_oracle_check(cfg: ExperimentConfig, args) -> int:
    seed = cfg.require_seed()
    reports = oracle_reports(cfg, seed)
    _write_report(reports, cfg.out)
    _print_summary(reports)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def cmd_revenue(cfg: ExperimentConfig, args) -> int:
    seed = cfg.require_seed()
    if not cfg.models:
        raise ConfigError("config.models: revenue needs at least one consumer")
    mech = _mechanism(cfg)
    est = verify.estimate_revenue(None, None, cfg.trials, seed, mech)
    check = verify.check_revenue_identity(None, None, cfg.trials, seed, mech)
    record = {
        "schema_version": SCHEMA_VERSION,
        "command": "revenue",
        "mechanism": mech.name,
        "trials": est.trials,
        "seed": seed,
        "revenue": {"mean": est.mean, "stderr": est.stderr},
        "virtual_surplus": {"mean": est.virtual_surplus, "stderr": est.virtual_stderr},
        "difference_stderr": est.difference_stderr,
        "identity": check.to_record(),
    }
    _emit(_dump(record), cfg.out)
    if cfg.out and not args.no_figures:
        revenue, surplus = verify.revenue_samples(None, None, cfg.trials, seed, mech)
        plots.plot_revenue(revenue, surplus, plots.figure_dir(cfg.out) / "revenue.png")
    return EXIT_OK if check.passed else EXIT_FAIL


COMMANDS = {
    "validate": cmd_validate,
    "run": cmd_run,
    "verify": cmd_verify,
    "oracle-check": cmd_oracle_check,
    "revenue": cmd_revenue,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flexauction", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--out", help="write the report here instead of stdout")
        p.add_argument("--seed", type=int)
        p.add_argument("--samples", type=int, help="Monte Carlo samples per interim estimate")
        p.add_argument("--trials", type=int, help="truthful profiles for IR and revenue checks")
        p.add_argument("--tie-break", choices=("index", "random"))
        p.add_argument("--workers", type=int)
        p.add_argument("--payment-rule", choices=("threshold", "reserve"), help="'reserve' is a negative control")
        p.add_argument("--no-figures", action="store_true")
        if name == "run":
            p.add_argument("--profile", required=True, help="reported types (JSON with theta and levels)")
        if name == "validate":
            p.add_argument("--grid-points", type=int, default=256)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        return COMMANDS[args.command](cfg, args)
    except CapacityError as exc:
        print(f"configuration error: {exc} (reduce the oracle's N/M)", file=sys.stderr)
        return EXIT_INPUT
    except FlexAuctionError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
