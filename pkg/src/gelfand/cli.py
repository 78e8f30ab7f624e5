"""Command-line client.  Runs commands in-process, or against a running service with --server.

Exit codes: 0 ok, 1 assertion failure, 2 config error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, parse_config

COMMAND_NAMES = ("greens", "reduced", "degree", "verify", "solve")
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gelfand-lab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMAND_NAMES)
    ap.add_argument("--config", help="JSON experiment config (defaults apply when omitted)")
    ap.add_argument("--out", help="directory for report.json, config.json and CSV tables")
    ap.add_argument("--threads", type=int, default=None, help="BLAS/OpenMP thread count")
    ap.add_argument("--p", type=float, default=None, help="Lebesgue exponent for residual norms")
    ap.add_argument("--server", help="base URL of a running gelfand service")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _load(args) -> ExperimentConfig:
    cfg = parse_config(args.config)
    updates = {}
    if args.p is not None:
        updates["p"] = args.p
    if args.out is not None:
        updates["out"] = args.out
    return ExperimentConfig.model_validate({**cfg.model_dump(), **updates}) if updates else cfg


def _remote(server: str, command: str, cfg: ExperimentConfig) -> tuple[dict, int]:
    import httpx

    r = httpx.post(f"{server.rstrip('/')}/{command}", json=cfg.model_dump(mode="json"), timeout=None)
    report = r.json()
    fallback = EXIT_CONFIG if r.status_code == 422 else 3
    return report, int(report.get("exit_code", fallback))


def _flat_rows(report: dict) -> list[dict]:
    rows = []
    for row in report.get("sweep", []) or []:
        flat = {k: v for k, v in row.items() if isinstance(v, (int, float, str))}
        for b_i, b in enumerate(row.get("branches", []) or []):
            rows.append({**flat, "branch": b_i, **{k: v for k, v in b.items() if isinstance(v, (int, float, str))}})
        if not row.get("branches"):
            rows.append(flat)
    return rows


def write_outputs(out: str | Path, cfg: ExperimentConfig, report: dict) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.model_dump(mode="json"), sort_keys=True, indent=2))
    (out / "report.json").write_text(json.dumps(report, sort_keys=True, indent=2))
    rows = _flat_rows(report)
    if rows:
        keys = sorted({k for r in rows for k in r})
        with open(out / f"{report['command']}_sweep.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            w.writerows(rows)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.server:
        report, code = _remote(args.server, args.command, cfg)
    else:
        from .service import run_command

        report, code = run_command(args.command, cfg)
    if cfg.out:
        write_outputs(cfg.out, cfg, report)
    print(json.dumps(report, sort_keys=True, indent=2))
    if code:
        print(f"{args.command}: {report.get('status')} (exit {code})", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
