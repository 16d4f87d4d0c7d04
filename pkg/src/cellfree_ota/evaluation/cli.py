"""Command line entry point: ``simulate``, ``sweep`` and ``verify``."""
from __future__ import annotations

import argparse
import ast
import logging
import sys
from pathlib import Path

from ..scenario import ScenarioConfig, load_config
from .campaign import DEFAULT_ALGORITHMS, run_campaign, write_report

log = logging.getLogger("cellfree_ota")

# sweepable fields, with the short names used on the command line
SWEEP_ALIASES = {
    "K": "num_ue",
    "M": "antennas_per_bs",
    "noise": "ue_noise_dbm",
    "tau": "pilot_length",
    "alpha": "step_size",
}


def _config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    changes = {}
    if args.drops is not None:
        changes["drops"] = args.drops
    if args.seed is not None:
        changes["master_seed"] = args.seed
    return cfg.replace(**changes) if changes else cfg


def _algorithms(text):
    return [a.strip() for a in text.split(",") if a.strip()] if text else list(DEFAULT_ALGORITHMS)


def _progress(done, total):
    if done == total or done % 10 == 0:
        log.info("%d/%d drops", done, total)


def _literal(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def cmd_simulate(args) -> int:
    cfg = _config(args)
    report = run_campaign(cfg, _algorithms(args.algorithms), progress=_progress,
                          workers=args.workers)
    paths = write_report(report, args.out, args.name)
    for alg, row in report.summary().items():
        print(f"{alg:22s} {row['final_mean_rate']:8.2f} +/- {row['final_ci95']:.2f} bps/Hz")
    print(f"wrote {paths['csv']} and {paths['manifest']}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    field = SWEEP_ALIASES.get(args.param, args.param)
    values = [_literal(v) for v in args.values.split(",")]
    algorithms = _algorithms(args.algorithms)
    if args.param == "T":
        # block length only rescales the overhead, so one campaign serves all values
        report = run_campaign(cfg, algorithms, progress=_progress, workers=args.workers)
        write_report(report, args.out, args.name)
        out = Path(args.out) / f"{args.name}_effective.csv"
        with out.open("w") as fh:
            fh.write("algorithm,T,iteration,effective_rate\n")
            for alg in report.algorithms:
                for T in values:
                    for i, r in enumerate(report.effective_curve(alg, float(T)), start=1):
                        if r == r:
                            fh.write(f"{alg},{T},{i},{r:.6f}\n")
        print(f"wrote {out}")
        return 0
    for v in values:
        changes = {field: v}
        if field == "ue_noise_dbm":
            changes["bs_noise_dbm"] = v
        if field == "pilot_length" and args.random_pilots:
            changes["pilot_mode"] = "random"
        report = run_campaign(cfg.replace(**changes), algorithms, progress=_progress,
                              workers=args.workers)
        paths = write_report(report, args.out, f"{args.name}_{args.param}_{v}")
        print(f"{args.param}={v}: " + ", ".join(
            f"{a} {r['final_mean_rate']:.2f}" for a, r in report.summary().items()))
        log.info("wrote %s", paths["csv"])
    return 0


def cmd_verify(args) -> int:
    from ..acceptance import run_acceptance

    results = run_acceptance(drops=args.drops or 200, sweep_drops=args.sweep_drops,
                             progress=_progress)
    for r in results:
        print(r.line())
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cellfree-ota")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="YAML or JSON scenario file")
        sp.add_argument("--drops", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int, default=1, help="parallel drop processes")

    s = sub.add_parser("simulate", help="Monte-Carlo sum rates per iteration")
    common(s)
    s.add_argument("--algorithms", help="comma-separated algorithm ids")
    s.add_argument("--out", type=Path, default=Path("results"))
    s.add_argument("--name", default="rates")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="repeat a campaign over values of one config field")
    common(w)
    w.add_argument("--param", required=True,
                   help="config field or one of " + ", ".join(SWEEP_ALIASES))
    w.add_argument("--values", required=True, help="comma-separated values")
    w.add_argument("--algorithms")
    w.add_argument("--random-pilots", action="store_true",
                   help="use random pilots when sweeping the pilot length")
    w.add_argument("--out", type=Path, default=Path("results"))
    w.add_argument("--name", default="sweep")
    w.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="run the acceptance checks")
    v.add_argument("--drops", type=int)
    v.add_argument("--sweep-drops", type=int, default=100)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
