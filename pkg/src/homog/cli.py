"""Command-line entry point: ``homog {laminate,study,run,divcurl,corrector}``.

Every run writes into ``--out`` (default: ``output.directory`` of the config).
Floats are printed with 17 significant digits, so identical configs give
byte-identical files.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import ConfigInvalid, HomogError
from .fields import Grid
from .hconv import REPORT_COLUMNS, ConvergenceReport, StudyFailed, divcurl_controls, hconvergence_study
from .oscillation import TestFunctionFamily, homogenized_laminate

log = logging.getLogger("homog")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
FAILURE_MARKER = "# FAILED"

DEFAULT_CONFIG = {
    "grid": {"n_cells": 256},
    "profile": {"layers": [{"fraction": 0.5, "matrix": [[1, 0], [0, 1]]}, {"fraction": 0.5, "matrix": [[4, 0], [0, 4]]}]},
    "epsilons": ["1/4", "1/8", "1/16"],
}

DECAY_RATIO = {
    "l2_u_err": 0.7,
    "weak_E_err": 0.7,
    "weak_D_err": 0.7,
    "weak_M_err": 0.65,
    "weak_P_err": 0.65,
    "divcurl_err": 0.7,
}
DEGENERATE_TOL = 1e-9
IDENTITY_TOL = 1e-13
BOUNDED_GROWTH = 1.05
CORRECTOR_GAIN = 0.5

DIVCURL_COLUMNS = (
    "epsilon",
    "positive_err",
    "negative_err",
    "negative_mean",
    "positive_curl_hminus1",
    "negative_curl_hminus1",
)
CORRECTOR_COLUMNS = (
    "epsilon",
    "corr_E_err",
    "corr_D_err",
    "naive_E_err",
    "naive_D_err",
    "corr_pairing",
    "N_max",
    "Q_max",
)


# ------------------------------------------------------------------ writers

def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def dumps_json(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with fixed key order and 17-digit floats (NaN written as ``null``)."""
    pad, inner = " " * (indent * _level), " " * (indent * (_level + 1))
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {dumps_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(dumps_json(v, indent, _level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(inner + dumps_json(v, indent, _level + 1) for v in seq) + "\n" + pad + "]"
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (float, np.floating)) and not math.isfinite(float(obj)):
        return "null"
    return fmt(obj)


def write_csv(path: Path, columns, rows, marker: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])
        if marker:
            fh.write(marker + "\n")


def write_text(path: Path, text: str) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text)


def ahom_document(laminate) -> dict:
    return {
        "A_hom": laminate.A_hom.tolist(),
        "M_bar": laminate.M_bar.tolist(),
        "P_bar": laminate.P_bar.tolist(),
    }


# ------------------------------------------------------------------- checks

def _decay_line(name: str, values: np.ndarray, ratio: float) -> tuple[bool, str]:
    vals = ", ".join(fmt(v) for v in values)
    if values.size and np.all(np.abs(values) <= DEGENERATE_TOL):
        return True, f"PASS {name}: all values <= {DEGENERATE_TOL:g} [{vals}]"
    if values.size < 2 or not np.all(np.isfinite(values)):
        return False, f"FAIL {name}: cannot assess decay [{vals}]"
    r = values[1:] / values[:-1]
    ok = bool(np.all(r <= ratio))
    rs = ", ".join(f"{v:.4f}" for v in r)
    return ok, f"{'PASS' if ok else 'FAIL'} {name}: ratios [{rs}] <= {ratio:g}"


def _bounded_line(name: str, values: np.ndarray) -> tuple[bool, str]:
    ok = bool(np.all(np.isfinite(values)) and values[-1] <= BOUNDED_GROWTH * values[0])
    return ok, f"{'PASS' if ok else 'FAIL'} {name}: {fmt(values[0])} -> {fmt(values[-1])} (growth <= {BOUNDED_GROWTH - 1:.0%})"


def _corrector_lines(report: ConvergenceReport) -> list[tuple[bool, str]]:
    out = []
    last = report.records[-1]
    for key in ("E", "D"):
        corr, naive = getattr(last, f"corr_{key}_err"), getattr(last, f"naive_{key}_err")
        if naive <= DEGENERATE_TOL:
            ok = corr <= DEGENERATE_TOL
        else:
            ok = corr <= CORRECTOR_GAIN * naive
        out.append((ok, f"{'PASS' if ok else 'FAIL'} corrector_{key} at eps={fmt(last.epsilon)}: "
                        f"{fmt(corr)} <= {CORRECTOR_GAIN:g} * {fmt(naive)}"))
    if len(report.records) > 1:
        out.append(_bounded_line("N_max", report.column("N_max")))
        out.append(_bounded_line("Q_max", report.column("Q_max")))
    return out


def study_checks(report: ConvergenceReport, correctors_only: bool = False) -> list[tuple[bool, str]]:
    checks = []
    if not correctors_only:
        for name, ratio in DECAY_RATIO.items():
            checks.append(_decay_line(name, report.column(name), ratio))
        ident = report.column("identity_residual")
        ok = bool(np.all(ident <= IDENTITY_TOL))
        checks.append((ok, f"{'PASS' if ok else 'FAIL'} identity M D = P E: max {fmt(ident.max())} <= {IDENTITY_TOL:g}"))
    checks.extend(_corrector_lines(report))
    return checks


def render_summary(title: str, checks, extra=(), failure: str | None = None) -> str:
    lines = [title]
    lines.extend(extra)
    lines.extend(line for _, line in checks)
    if failure:
        lines.append(f"{FAILURE_MARKER}: {failure}")
        lines.append("OVERALL: FAILED")
    else:
        lines.append(f"OVERALL: {'PASS' if all(ok for ok, _ in checks) else 'FAIL'}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- commands

def cmd_laminate(cfg: RunConfig, out: Path) -> int:
    lam = homogenized_laminate(cfg.profile)
    write_text(out / "ahom.json", dumps_json(ahom_document(lam)) + "\n")
    rows = ["A_hom = " + dumps_json(lam.A_hom.tolist())]
    write_text(out / "summary.txt", render_summary("laminate", [], rows))
    return EXIT_OK


def _run_study(cfg: RunConfig, out: Path, correctors_only: bool) -> int:
    lam = homogenized_laminate(cfg.profile)
    write_text(out / "ahom.json", dumps_json(ahom_document(lam)) + "\n")
    study = cfg.study_config(with_quotient=not correctors_only)
    failure = None
    try:
        report = hconvergence_study(study)
    except StudyFailed as exc:
        report, failure = exc.report, str(exc)
    except HomogError as exc:
        report, failure = ConvergenceReport(lam, [], float("nan"), study), str(exc)
    marker = f"{FAILURE_MARKER}: {failure}" if failure else None

    if correctors_only:
        rows = [tuple(getattr(r, c) for c in CORRECTOR_COLUMNS) for r in report.records]
        write_csv(out / "corrector.csv", CORRECTOR_COLUMNS, rows, marker)
    else:
        write_csv(out / "report.csv", REPORT_COLUMNS, report.rows(), marker)
    checks = study_checks(report, correctors_only) if report.records else []
    extra = [f"hminus1_f = {fmt(report.hminus1_f)}"]
    title = "corrector" if correctors_only else "study"
    write_text(out / "summary.txt", render_summary(title, checks, extra, failure))
    if failure:
        log.error("numerical failure: %s", failure)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_study(cfg: RunConfig, out: Path) -> int:
    return _run_study(cfg, out, correctors_only=False)


def cmd_corrector(cfg: RunConfig, out: Path) -> int:
    return _run_study(cfg, out, correctors_only=True)


def cmd_divcurl(cfg: RunConfig, out: Path) -> int:
    bench = divcurl_controls(Grid(cfg.n_cells), cfg.epsilons, TestFunctionFamily(cfg.polynomial_degree))
    pos, neg = bench.positive.worst(), bench.negative.worst()
    rows = [
        (e, p, n, m, pc, nc)
        for e, p, n, m, pc, nc in zip(
            cfg.epsilons, pos, neg, bench.negative_mean, bench.positive_curl_hminus1, bench.negative_curl_hminus1
        )
    ]
    write_csv(out / "divcurl.csv", DIVCURL_COLUMNS, rows)
    checks = [_decay_line("positive_err", pos, DECAY_RATIO["divcurl_err"])]
    m = bench.negative_mean[-1]
    ok = abs(m - 0.5) <= 0.02
    checks.append((ok, f"{'PASS' if ok else 'FAIL'} negative_mean at eps={fmt(cfg.epsilons[-1])}: {fmt(m)} within 0.5 +- 0.02"))
    write_text(out / "summary.txt", render_summary("divcurl", checks))
    return EXIT_OK


COMMANDS = {
    "laminate": (cmd_laminate, "homogenized matrix only"),
    "study": (cmd_study, "full convergence report"),
    "run": (cmd_study, "alias of study"),
    "divcurl": (cmd_divcurl, "div-curl positive/negative control bench"),
    "corrector": (cmd_corrector, "corrector-only report"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="JSON run configuration")
    common.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--print-config", action="store_true", default=argparse.SUPPRESS,
                        help="print the normalized configuration and exit")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="reserved; every computation is deterministic")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="homog", parents=[common],
                                     description="Laminate homogenization and H-convergence checks.")
    sub = parser.add_subparsers(dest="command")
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    opts = vars(args)
    logging.basicConfig(level=logging.INFO if opts.get("verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(opts["config"]) if "config" in opts else RunConfig.from_dict(DEFAULT_CONFIG)
    except ConfigInvalid as exc:
        print(f"homog: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if opts.get("print_config"):
        sys.stdout.write(dumps_json(cfg.to_dict()) + "\n")
        return EXIT_OK

    out = Path(opts.get("out") or cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"homog: cannot create output directory {out}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    command = opts.get("command") or "run"
    log.info("command=%s out=%s threads=%s", command, out, os.environ.get("HOMOG_THREADS", "1"))
    try:
        return COMMANDS[command][0](cfg, out)
    except ConfigInvalid as exc:
        print(f"homog: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HomogError as exc:
        print(f"homog: numerical failure: {exc}", file=sys.stderr)
        write_text(out / "summary.txt", render_summary(command, [], failure=str(exc)))
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
