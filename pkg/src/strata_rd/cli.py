"""Command-line interface: ``analyze``, ``simulate`` and ``calgb``.

Exit codes: 0 success, 1 usage or I/O error, 2 finished with warnings.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

from . import hypothesis, simulation, tables, variance
from .errors import StrataError
from .estimators import mh_estimate, ps_estimate, unadjusted_estimate
from .tables import StratifiedDataset, SubjectRecord

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_WARNINGS = 2

# warnings that describe the data rather than a failed computation
ADVISORY = {hypothesis.SMALL_DEVIATIONS}

OUT_OF_SCOPE_NOTE = (
    "Score-based intervals (stratified Newcombe, Klingenberg) and G-computation "
    "are not implemented, so those columns are omitted."
)


@dataclass(frozen=True)
class MethodResult:
    method: str
    variance: float
    se: Optional[float]
    ci: Optional[tuple[float, float]]
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class EstimateEntry:
    estimator: str
    estimand: str
    value: float
    methods: tuple[MethodResult, ...]

    def method(self, name: str) -> MethodResult:
        for m in self.methods:
            if m.method == name:
                return m
        raise KeyError(name)


@dataclass(frozen=True)
class DatasetDigest:
    strata: int
    n: int
    dropped_strata: int


@dataclass(frozen=True)
class AnalysisReport:
    estimates: tuple[EstimateEntry, ...]
    tests: tuple[hypothesis.TestResult, ...]
    warnings: tuple[str, ...]
    dataset_digest: DatasetDigest
    level: float = 0.95

    def entry(self, estimator: str, estimand: str) -> EstimateEntry:
        for e in self.estimates:
            if (e.estimator, e.estimand) == (estimator, estimand):
                return e
        raise KeyError((estimator, estimand))

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "AnalysisReport":
        def method(m):
            ci = tuple(m["ci"]) if m["ci"] is not None else None
            return MethodResult(m["method"], m["variance"], m["se"], ci, tuple(m["warnings"]))

        return cls(
            estimates=tuple(
                EstimateEntry(e["estimator"], e["estimand"], e["value"], tuple(method(m) for m in e["methods"]))
                for e in d["estimates"]),
            tests=tuple(hypothesis.TestResult(**{**t, "warnings": tuple(t["warnings"])}) for t in d["tests"]),
            warnings=tuple(d["warnings"]),
            dataset_digest=DatasetDigest(**d["dataset_digest"]),
            level=d["level"],
        )

    @classmethod
    def from_json(cls, text: str) -> "AnalysisReport":
        return cls.from_dict(json.loads(text))


def _method_result(value: float, v: variance.VarianceEstimate, level: float) -> MethodResult:
    se = v.se
    if math.isnan(se):
        return MethodResult(v.method, v.variance, None, None, v.warnings)
    return MethodResult(v.method, v.variance, se, variance.confidence_interval(value, v, level), v.warnings)


def build_report(dataset: StratifiedDataset, records: Optional[Sequence[SubjectRecord]] = None,
                 level: float = 0.95, bootstrap: int = 0, seed: int = 0) -> AnalysisReport:
    """Every estimator, variance and test on one dataset."""
    warnings = [str(w) for w in tables.validate(dataset)]
    mh = mh_estimate(dataset).value

    mh_methods = [_method_result(mh, f(dataset), level)
                  for f in (variance.var_gr, variance.var_sato, variance.var_mgr_mh)]
    ate_methods = [_method_result(mh, variance.var_mgr_ate(dataset), level)]
    if bootstrap:
        recs = records if records is not None else tables.expand_records(dataset)
        try:
            vb = variance.var_bootstrap(recs, "MH", bootstrap, seed)
            ate_methods.append(_method_result(mh, vb, level))
            if vb.failed_replicates:
                warnings.append(f"BOOTSTRAP_FAILED_REPLICATES: {vb.failed_replicates} of {bootstrap}")
        except StrataError as exc:
            warnings.append(f"{exc.code}: {exc}")
    estimates = [
        EstimateEntry("MH", variance.DELTA_MH, mh, tuple(mh_methods)),
        EstimateEntry("MH", variance.DELTA_ATE, mh, tuple(ate_methods)),
    ]
    ps = ps_estimate(dataset).value
    estimates.append(EstimateEntry("PS", variance.DELTA_ATE, ps,
                                   (_method_result(ps, variance.var_ps(dataset), level),)))
    try:
        un = unadjusted_estimate(dataset).value
        estimates.append(EstimateEntry("UNADJUSTED", variance.DELTA_ATE, un,
                                       (_method_result(un, variance.var_unadjusted(dataset), level),)))
    except StrataError as exc:
        warnings.append(f"{exc.code}: {exc}")

    tests = []
    for run in (lambda: hypothesis.mh_test(dataset),
                lambda: hypothesis.wald_test(dataset, variance.DELTA_MH, 0.0),
                lambda: hypothesis.wald_test(dataset, variance.DELTA_ATE, 0.0)):
        try:
            tests.append(run())
        except StrataError as exc:
            warnings.append(f"{exc.code}: {exc}")
    for e in estimates:
        for m in e.methods:
            warnings += [f"{w}: {e.estimator} {m.method}" for w in m.warnings]
    for t in tests:
        warnings += [f"{w}: {t.method}" for w in t.warnings]

    dropped = sum(1 for s in dataset.strata if not s.included)
    return AnalysisReport(tuple(estimates), tuple(tests), tuple(warnings),
                          DatasetDigest(dataset.K, dataset.n, dropped), level)


def has_substantive_warnings(report: AnalysisReport) -> bool:
    return any(w.split(":", 1)[0] not in ADVISORY for w in report.warnings)


# -- table rendering -----------------------------------------------------------

TABLE_COLUMNS = (
    ("GR", "MH", "GR"),
    ("Sato", "MH", "SATO"),
    ("mGR", "MH", None),
    ("Boot", "MH", "BOOTSTRAP"),
    ("Unadj", "UNADJUSTED", "UNADJUSTED"),
    ("PS", "PS", "PS"),
)


def _fmt(x: Optional[float]) -> str:
    return simulation.display(x, digits=2)


def _cells(report: AnalysisReport, estimand: str, header: str, estimator: str, method: Optional[str]):
    if method is None:
        method = "MGR_MH" if estimand == variance.DELTA_MH else "MGR_ATE"
    try:
        entry = report.entry(estimator, estimand)
        m = entry.method(method)
    except KeyError:
        return "-", "-", "-"
    se = _fmt(m.se) if m.se is not None else "NaN"
    ci = f"({_fmt(m.ci[0])},{_fmt(m.ci[1])})" if m.ci is not None else "-"
    return _fmt(entry.value), se, ci


def render_table(report: AnalysisReport) -> str:
    """Plain-text results, entries times 100 with two decimals."""
    headers = [h for h, _, _ in TABLE_COLUMNS]
    rows = []
    for estimand, name in ((variance.DELTA_MH, "delta_MH"), (variance.DELTA_ATE, "delta_ATE")):
        cols = [_cells(report, estimand, *c) for c in TABLE_COLUMNS]
        pct = round(100 * report.level)
        for i, label in enumerate(("Est", "SE", f"{pct}% CI")):
            rows.append([name if i == 0 else "", label] + [c[i] for c in cols])
    widths = [max(len(r[j]) for r in rows + [["", ""] + headers]) for j in range(len(headers) + 2)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(["", ""] + headers, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows]
    d = report.dataset_digest
    lines.append("")
    lines.append(f"strata={d.strata} n={d.n} dropped={d.dropped_strata}")
    for t in report.tests:
        lines.append(f"{t.method}: statistic={t.statistic:.4f} p={t.p_value:.4f} ({t.null_hypothesis})")
    for w in report.warnings:
        lines.append(f"warning: {w}")
    return "\n".join(lines) + "\n"


# -- argument parsing -------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _default_threads() -> int:
    raw = os.environ.get("STRATA_RD_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _add_analysis_flags(p: argparse.ArgumentParser, bootstrap_default: int):
    p.add_argument("--level", type=float, default=0.95, help="confidence level (default 0.95)")
    p.add_argument("--bootstrap", type=int, default=bootstrap_default, metavar="B",
                   help=f"bootstrap replicates, 0 to skip (default {bootstrap_default})")
    p.add_argument("--seed", type=int, default=0, help="bootstrap seed (default 0)")
    p.add_argument("--out", choices=("table", "json"), default="table", help="output style")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="strata-rd", description="Stratified risk-difference analysis. " + OUT_OF_SCOPE_NOTE)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="analyse a CSV dataset or the embedded 'calgb' data",
                       description=OUT_OF_SCOPE_NOTE)
    a.add_argument("input", help="CSV path, or the name of an embedded dataset (calgb)")
    a.add_argument("--format", choices=("subjects", "aggregated"), default=None,
                   help="CSV layout; guessed from the header when omitted")
    _add_analysis_flags(a, bootstrap_default=200)

    s = sub.add_parser("simulate", help="run a grid of simulation scenarios")
    s.add_argument("--factors", default="1a,2a,3a,4a",
                   help="comma-separated levels: 1a-1c, 2a-2b, 3a-3c, 4a-4c, extreme, ird; "
                        "an omitted factor runs all of its levels")
    s.add_argument("--runs", type=int, default=1000)
    s.add_argument("--gen-seed", type=int, default=2024, help="seed for once-drawn scenario parameters")
    s.add_argument("--run-seed", type=int, default=1, help="seed for replicate streams")
    s.add_argument("--threads", type=int, default=None,
                   help="worker threads (default $STRATA_RD_THREADS or 1)")
    s.add_argument("--bootstrap", type=int, default=0, metavar="B", help="bootstrap replicates per run")
    s.add_argument("--level", type=float, default=0.95)
    s.add_argument("--out", default=None, metavar="DIR",
                   help="directory for simulation.json and simulation.csv")

    c = sub.add_parser("calgb", help="reproduce the CALGB analysis table", description=OUT_OF_SCOPE_NOTE)
    c.add_argument("--show-data", action="store_true", help="print the reconstructed 2x2 tables first")
    _add_analysis_flags(c, bootstrap_default=200)
    return parser


def _load(source: str, fmt: Optional[str]):
    if source in tables.EMBEDDED and not Path(source).exists():
        ds = tables.load_embedded(source)
        return ds, None
    return tables.read_csv(source, fmt)


def _emit_report(report: AnalysisReport, style: str, out) -> int:
    out.write(report.to_json() if style == "json" else render_table(report))
    return EXIT_WARNINGS if has_substantive_warnings(report) else EXIT_OK


def cmd_analyze(args, out=None) -> int:
    out = out or sys.stdout
    dataset, records = _load(args.input, args.format)
    report = build_report(dataset, records, args.level, args.bootstrap, args.seed)
    return _emit_report(report, args.out, out)


def cmd_calgb(args, out=None) -> int:
    out = out or sys.stdout
    dataset = tables.calgb_dataset()
    if args.show_data:
        out.write(tables.write_aggregated_csv(dataset))
        out.write("\n")
    report = build_report(dataset, tables.calgb_records(), args.level, args.bootstrap, args.seed)
    return _emit_report(report, args.out, out)


def cmd_simulate(args, out=None) -> int:
    out = out or sys.stdout
    threads = args.threads if args.threads is not None else _default_threads()
    if args.runs < 1:
        raise StrataError("--runs must be at least 1")
    configs = simulation.parse_factors(args.factors, args.gen_seed, args.run_seed)
    summaries = [simulation.run_scenario(cfg, args.runs, workers=threads, bootstrap=args.bootstrap,
                                         level=args.level) for cfg in configs]
    csv_text = simulation.summaries_to_csv(summaries)
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        (d / "simulation.json").write_text(simulation.summaries_to_json(summaries), encoding="utf-8")
        (d / "simulation.csv").write_text(csv_text, encoding="utf-8")
    out.write(csv_text)
    return EXIT_WARNINGS if any(s.failures for s in summaries) else EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "calgb": cmd_calgb}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (StrataError, OSError, UnicodeDecodeError) as exc:
        code = getattr(exc, "code", type(exc).__name__)
        print(f"error [{code}]: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
