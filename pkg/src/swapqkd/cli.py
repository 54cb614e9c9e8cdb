"""Command-line front end.

Exit codes: 0 ok, 1 usage, 2 configuration, 3 runtime, 4 selftest failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import secrets
import sys
import tempfile
from pathlib import Path
from typing import Optional

from . import __version__
from .config import (
    RunConfig,
    config_digest,
    dump_config,
    experiment_config,
    parse_config,
    security_params,
    sifted_summary,
)
from .errors import ConfigError, FitError, InvalidInputError
from .experiment import run_fringe_scan, run_qkd_session
from .finite_key import analyze, simulate_rate_curve
from .fringe import fit_visibility
from .selftest import run_selftest
from .timebin import chsh_from_visibility, fidelity_from_visibility

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME, EXIT_SELFTEST = 0, 1, 2, 3, 4
COMMANDS = ("fringe", "qkd", "keyrate", "curve", "selftest")
CSV_COMMANDS = ("fringe", "curve")
FRINGE_COLUMNS = ("phi_A_rad", "fourfold_count", "total_heralds", "poisson_sigma")
CURVE_COLUMNS = ("e_b", "rate_fraction")
WORKERS_ENV = "SWAPQKD_WORKERS"

# Parameters with no published value; flagged in every simulation report.
ASSUMPTIONS = (
    "detector efficiencies and dark-count probabilities are placeholders",
    "fibre drift rates are placeholders, not fits to field data",
    "multi-pair emissions beyond the first pair are incoherent contaminants",
    "Bob's analyser frame is offset by bob_frame_phase so that Psi- heralds Psi+ idlers",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", type=Path, help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), help="report format")
    common.add_argument(
        "--workers", type=int, help=f"worker processes (default: ${WORKERS_ENV} or 1)"
    )
    parser = _Parser(prog="swapqkd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "fringe": "simulate a four-fold coincidence fringe and fit its visibility",
        "qkd": "simulate a key session and run the finite-key analysis",
        "keyrate": "finite-key analysis of user-supplied sifted-key statistics",
        "curve": "secure fraction per sifted bit versus bit error rate",
        "selftest": "run the pinned regression checks",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _load_config(path: Optional[Path]) -> RunConfig:
    if path is None:
        return parse_config("")
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)


def _fringe(config: RunConfig, seed: int, workers: int) -> dict:
    exp = experiment_config(config, seed)
    points = run_fringe_scan(exp, config.fringe.phi_b, config.fringe.grid(), workers=workers)
    try:
        f = fit_visibility(points)
        S, dS = chsh_from_visibility(f.V, f.dV)
        fit = {
            "V": float(f.V),
            "dV": f.dV,
            "phi0": f.phi0,
            "C0": float(f.C0),
            "fidelity": fidelity_from_visibility(f.V),
            "chsh_S": S,
            "chsh_dS": dS,
        }
        fit_error = None
    except FitError as exc:
        fit, fit_error = None, str(exc)
    return {
        "points": [
            {
                "phi_A_rad": p.phi_A,
                "fourfold_count": p.fourfold_count,
                "total_heralds": p.total_heralds,
                "poisson_sigma": p.poisson_sigma,
            }
            for p in points
        ],
        "fit": fit,
        "fit_error": fit_error,
        "assumptions": list(ASSUMPTIONS),
    }


def _qkd(config: RunConfig, seed: int, workers: int) -> dict:
    exp = experiment_config(config, seed)
    _, summary = run_qkd_session(exp, workers=workers)
    try:
        report = analyze(summary.to_sifted_summary(), security_params(config), Q=summary.Q)
        key_rate, key_rate_error = report.to_dict(), None
    except InvalidInputError as exc:
        key_rate, key_rate_error = None, str(exc)
    return {
        "session": summary.to_dict(),
        "key_rate": key_rate,
        "key_rate_error": key_rate_error,
        "assumptions": list(ASSUMPTIONS),
    }


def _keyrate(config: RunConfig) -> dict:
    return analyze(sifted_summary(config), security_params(config)).to_dict()


def _curve(config: RunConfig) -> dict:
    rows = simulate_rate_curve(config.curve.n_per_basis, config.curve.grid(), security_params(config))
    return {
        "n_per_basis": config.curve.n_per_basis,
        "rows": [{"e_b": e, "rate_fraction": r} for e, r in rows],
    }


def _selftest() -> dict:
    checks = run_selftest()
    return {
        "passed": all(c.passed for c in checks),
        "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in checks],
    }


def _render_csv(command: str, report: dict) -> str:
    buf = io.StringIO()
    meta = report["meta"]
    buf.write(f"# swapqkd {meta['version']} {command} seed={meta['seed']} config_digest={meta['config_digest']}\n")
    payload = report["payload"]
    if command == "fringe":
        if payload["fit"] is not None:
            buf.write(f"# V={payload['fit']['V']!r} dV={payload['fit']['dV']!r}\n")
        columns, rows = FRINGE_COLUMNS, payload["points"]
    else:
        columns, rows = CURVE_COLUMNS, payload["rows"]
    buf.write("# config=" + json.dumps(report["config"], sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def _write_atomic(path: Path, text: str) -> None:
    path = path.resolve()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def run(command: str, config: RunConfig, seed: int, workers: int = 1) -> tuple[dict, int]:
    """Execute one command; returns the report and the exit code."""
    if command == "fringe":
        payload = _fringe(config, seed, workers)
    elif command == "qkd":
        payload = _qkd(config, seed, workers)
    elif command == "keyrate":
        payload = _keyrate(config)
    elif command == "curve":
        payload = _curve(config)
    elif command == "selftest":
        payload = _selftest()
    else:
        raise UsageError(f"unknown command {command!r}")
    report = {
        "meta": {
            "command": command,
            "version": __version__,
            "seed": seed,
            "config_digest": config_digest(config),
        },
        "config": dump_config(config),
        "payload": payload,
    }
    code = EXIT_OK
    if command == "selftest" and not payload["passed"]:
        code = EXIT_SELFTEST
    return report, code


def render(command: str, report: dict, fmt: str) -> str:
    if fmt == "csv":
        return _render_csv(command, report)
    return json.dumps(report, indent=2, default=_json_default) + "\n"


def _json_default(obj):
    if hasattr(obj, "item"):  # numpy scalars
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def main(argv: Optional[list[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"swapqkd: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        config = _load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("seed", "must be an unsigned 64-bit integer")
            config = config.model_copy(update={"seed": args.seed})
        if config.seed is None:
            config = config.model_copy(update={"seed": secrets.randbits(64)})
        fmt = args.format or config.output.format
        if fmt == "csv" and args.command not in CSV_COMMANDS:
            print(f"swapqkd: usage error: csv output is only available for {CSV_COMMANDS}", file=sys.stderr)
            return EXIT_USAGE
        workers = args.workers
        if workers is None:
            workers = int(os.environ.get(WORKERS_ENV, "1"))
        if workers < 1:
            print("swapqkd: usage error: --workers must be >= 1", file=sys.stderr)
            return EXIT_USAGE
    except ConfigError as exc:
        print(f"swapqkd: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"swapqkd: usage error: {WORKERS_ENV}: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        report, code = run(args.command, config, config.seed, workers)
        text = render(args.command, report, fmt)
        out = args.out or (Path(config.output.path) if config.output.path else None)
        if out is None:
            sys.stdout.write(text)
        else:
            _write_atomic(out, text)
    except ConfigError as exc:
        print(f"swapqkd: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvalidInputError, FitError, OSError, RuntimeError) as exc:
        print(f"swapqkd: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return code


if __name__ == "__main__":
    sys.exit(main())
