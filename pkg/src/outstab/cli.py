"""Command-line entry point: ``outstab {analyze,simulate,oracle-check,validate}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from outstab import report as rp
from outstab.config import ConfigError, load_config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="outstab", description="Output-stabilizability analyzer for zone-actuated reaction-diffusion systems.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("analyze", "compute the spectral criterion and write report.json"),
        ("simulate", "simulate the modal closed loop, write series.csv and decay.json"),
        ("oracle-check", "compare against the finite-difference oracle, write oracle.json"),
        ("validate", "check a configuration file"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, required=name != "oracle-check", help="TOML run configuration")
        p.add_argument("--out", type=Path, default=None, help="output directory (default: stdout / config [output] dir)")
        p.add_argument("--k-reading", choices=("literal", "refined"), default=None)
        p.add_argument("--modes", type=int, default=None, help="minimum number of modes in the verdict truncation")
        p.add_argument("--seed", type=int, default=None, help="run the randomized agreement suite with this seed")
        if name == "oracle-check":
            p.add_argument("--trials", type=int, default=50, help="1-D configurations in the randomized suite")
            p.add_argument("--trials-2d", type=int, default=10, help="square-domain configurations in the randomized suite")
    return parser


def _emit(text: str, out_dir: Path | None, name: str) -> None:
    if out_dir is None:
        sys.stdout.write(text)
        return
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(text, encoding="utf-8")


def _run_suite(args) -> int:
    from outstab.suites import agreement_suite

    outcomes = agreement_suite(args.seed, args.trials, args.trials_2d)
    rows = [
        {
            "k": o.config.k,
            "domain": o.config.domain.kind,
            "agreement": o.agreement,
            "verdict_refined": o.document["verdict_refined"],
            "verdict_oracle": o.document["verdict_oracle"],
        }
        for o in outcomes
    ]
    disagree = sum(1 for r in rows if r["agreement"] is False)
    inconclusive = sum(1 for r in rows if r["agreement"] == "inconclusive")
    doc = rp._header("oracle-check")
    doc.update(seed=args.seed, trials=len(rows), disagreements=disagree, inconclusive=inconclusive, runs=rows)
    _emit(rp.dumps(doc), args.out, "suite.json")
    return rp.EXIT_DISAGREEMENT if disagree else rp.EXIT_STABILIZABLE


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "oracle-check" and args.seed is not None and args.config is None:
        return _run_suite(args)
    if args.config is None:
        sys.stderr.write("outstab: --config is required\n")
        return rp.EXIT_CONFIG_ERROR
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for msg in exc.errors:
            sys.stderr.write(f"{args.config}: {msg}\n")
        return rp.EXIT_CONFIG_ERROR
    except OSError as exc:
        sys.stderr.write(f"outstab: {exc}\n")
        return rp.EXIT_CONFIG_ERROR
    cfg = cfg.with_overrides(args.k_reading, args.modes)
    out_dir = args.out or (Path(cfg.output_dir) if cfg.output_dir else None)

    try:
        if args.command == "validate":
            sys.stdout.write(f"{args.config}: ok ({len(cfg.actuators)} actuators, {len(cfg.sensors)} sensors)\n")
            return 0
        if args.command == "analyze":
            doc, code = rp.run_analysis(cfg)
            _emit(rp.dumps(doc), out_dir, "report.json")
            return code
        if args.command == "simulate":
            csv_text, doc, code = rp.run_simulation(cfg)
            if out_dir is None:
                sys.stdout.write(rp.dumps(doc))
            else:
                _emit(csv_text, out_dir, "series.csv")
                _emit(rp.dumps(doc), out_dir, "decay.json")
            return code
        doc, code = rp.run_oracle_check(cfg)
        _emit(rp.dumps(doc), out_dir, "oracle.json")
        return code
    except Exception as exc:  # noqa: BLE001 - surfaced as exit code 3
        sys.stderr.write(f"outstab: internal error: {type(exc).__name__}: {exc}\n")
        return rp.EXIT_INTERNAL_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
