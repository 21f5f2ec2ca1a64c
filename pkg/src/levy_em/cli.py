"""Command line entry point.

Exit codes: 0 success, 1 an experiment missed its tolerance, 2 invalid input.
"""
import argparse
import json
import math
from pathlib import Path
import sys

from .analysis import check_admissible, theoretical_rate
from .harness import (
    L2_LIKE_P,
    ConfigError,
    ExperimentConfig,
    default_out_dir,
    load_json,
    run_experiment,
    run_sweep,
    sweep_configs,
    with_overrides,
)
from .levy import LevySpec, validate_char_exponent, verify_h3_moments
from .rng import check_seed

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2

H3_TOLERANCE = 0.1


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _seed(text):
    try:
        return check_seed(int(text))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _real(text):
    try:
        return float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text}") from exc


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, help="64-bit master seed (overrides the config)")
    common.add_argument("--samples", type=_positive_int, help="Monte Carlo sample count")
    common.add_argument("--out-dir", type=Path, help="output directory (default: $LEVY_EM_OUT_DIR or ./levy_em_out)")
    common.add_argument("--workers", type=_positive_int, help="worker threads for path batches")

    parser = argparse.ArgumentParser(prog="levy-em", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run one experiment config")
    p.add_argument("config", type=Path)

    p = sub.add_parser("validate-sampler", parents=[common], help="statistical checks for a process spec")
    p.add_argument("levy", type=Path)
    p.add_argument("--p", type=_real, default=None, help="moment order for the scaling check")

    p = sub.add_parser("rate-table", parents=[common], help="run a sweep and write rate_table.csv")
    p.add_argument("sweep", type=Path)

    p = sub.add_parser("admissible", parents=[common], help="check an (alpha, alpha_tilde, beta) triple")
    p.add_argument("alpha", type=_real)
    p.add_argument("alpha_tilde", type=_real)
    p.add_argument("beta", type=_real)
    p.add_argument("--p", type=_real, default=L2_LIKE_P, help="moment order for the rate (must exceed 2)")
    return parser


def _cmd_admissible(args):
    adm = check_admissible(args.alpha, args.alpha_tilde, args.beta)
    if adm.admissible:
        rate = theoretical_rate(args.alpha, args.alpha_tilde, args.beta, args.p)
        print(f"admissible, margin {adm.margin:.6g}, theoretical L_p rate at p={args.p:g}: {rate:.6g}")
    else:
        print(f"not admissible, margin {adm.margin:.6g} (threshold {adm.threshold:.6g})")
    return EXIT_OK


def _cmd_run(args):
    config = with_overrides(ExperimentConfig.from_json(args.config), args.seed, args.samples, args.workers)
    config.validate()
    out = args.out_dir or default_out_dir() / f"{config.name}-{config.digest()}"
    verdict, _ = run_experiment(config, out)
    slope = "n/a" if verdict.fitted_slope is None else f"{verdict.fitted_slope:.4f}"
    rate = "n/a" if verdict.theoretical_rate is None else f"{verdict.theoretical_rate:.4f}"
    print(f"{verdict.status}: fitted slope {slope}, theoretical rate {rate}, seed {verdict.seed}, output {out}")
    for w in verdict.warnings:
        print(f"warning: {w}")
    return EXIT_OK if verdict.passed else EXIT_FAIL


def _cmd_validate(args):
    spec = LevySpec.from_dict(load_json(args.levy))
    seed = 0 if args.seed is None else args.seed
    M = args.samples or 100_000
    ok = True
    out = {"levy": spec.to_dict(), "seed": seed, "M": M, "char_exponent": [], "h3": None}
    for i, dt in enumerate((1.0, 1.0 / 16, 1.0 / 256)):
        rep = validate_char_exponent(spec, dt, M, rng=[seed, i])
        ok &= rep.passed
        print(f"char-exponent dt={dt:g}: max discrepancy {max(rep.discrepancy):.4f} "
              f"(threshold {rep.threshold:.4f}) {'pass' if rep.passed else 'FAIL'}")
        out["char_exponent"].append({"dt": dt, "max_discrepancy": max(rep.discrepancy),
                                     "threshold": rep.threshold, "pass": rep.passed})
    p = args.p if args.p is not None else (2.0 if math.isinf(spec.alpha_tilde) else spec.alpha_tilde / 2)
    h3 = verify_h3_moments(spec, p, M=M, rng=[seed, 99])
    h3_ok = abs(h3.slope - h3.expected_slope) <= H3_TOLERANCE
    ok &= h3_ok
    print(f"moment scaling p={p:g}: slope {h3.slope:.4f} vs {h3.expected_slope:.4f} "
          f"{'pass' if h3_ok else 'FAIL'}{' (heavy-tail regime)' if h3.heavy_tail else ''}")
    out["h3"] = {"p": p, "slope": h3.slope, "expected": h3.expected_slope, "heavy_tail": h3.heavy_tail, "pass": h3_ok}
    out["pass"] = bool(ok)
    if args.out_dir:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        (args.out_dir / "validate_sampler.json").write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if ok else EXIT_FAIL


def _cmd_rate_table(args):
    configs = [
        with_overrides(c, args.seed, args.samples, args.workers) for c in sweep_configs(load_json(args.sweep))
    ]
    for c in configs:
        c.validate()
    out = args.out_dir or default_out_dir() / args.sweep.stem
    verdicts = run_sweep(configs, out)
    for c, v in zip(configs, verdicts):
        slope = "n/a" if v.fitted_slope is None else f"{v.fitted_slope:.4f}"
        rate = "n/a" if v.theoretical_rate is None else f"{v.theoretical_rate:.4f}"
        print(f"{c.name}: {v.status}, slope {slope}, theory {rate}")
    print(f"table written to {out / 'rate_table.csv'}")
    return EXIT_OK if all(v.passed for v in verdicts) else EXIT_FAIL


COMMANDS = {
    "admissible": _cmd_admissible,
    "run": _cmd_run,
    "validate-sampler": _cmd_validate,
    "rate-table": _cmd_rate_table,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
