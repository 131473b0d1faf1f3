"""Dataset ingestion, report tables, and the command-line interface.

Input datasets are RFC 4180 CSV files with a header row. A DatasetSchema
names the assignment/uptake/outcome columns and the covariate columns that
define strata; covariates are used as-is or quantile-binned, and their
cross-product forms the analysis strata. Missing covariate values route to
their own "missing" stratum.

Two output dialects: human-facing report tables use 4 significant digits
and are byte-stable; machine-facing metrics CSVs use shortest round-trip
decimals so emit-then-parse is exact.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, fields
from typing import IO, Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .data_model import (
    EmptyBin,
    EmptyFile,
    EstimationError,
    MalformedRow,
    MissingColumn,
    ObservedSample,
    ScienceTable,
    stratum_summaries,
    validate,
)
from .estimators import METHODS, EstimatorConfig, estimate
from .simulation import (
    RNG_FAMILY,
    ConcentrationConfig,
    ScenarioConfig,
    ScenarioMetrics,
    run_concentration,
    run_scenario,
)
from .theory import (
    asyvar_iv,
    asyvar_iv_ps,
    bias_one_sided_exact,
    bias_one_sided_taylor,
    bias_two_sided_taylor,
    enumerate_expectation,
    moments,
)
from .variance import var_itt_neyman

__all__ = [
    "DatasetSchema",
    "ReportRow",
    "ReportTable",
    "StratumRow",
    "load_csv",
    "save_csv",
    "load_science_csv",
    "analyze",
    "stratum_report",
    "report_csv",
    "stratum_csv",
    "write_metrics_csv",
    "read_metrics_csv",
    "cli_main",
    "main",
]

DEFAULT_REPORT_ESTIMATORS = (
    "UNSTRAT",
    "IV_W",
    "IV_A",
    "DSS",
    "DSF",
    "PWIV",
    "TSLS_DUMMY",
)

METRICS_COLUMNS = (
    "scenario_id",
    "n",
    "pi_c_target",
    "predicts_c",
    "predicts_y",
    "nt_shift",
    "het_tau",
    "estimator",
    "bias",
    "true_se",
    "rmse",
    "cal_bloom",
    "cal_delta",
    "rel_instab_bloom",
    "rel_instab_delta",
    "drop_rate",
    "fail_rate",
    "mean_n_used",
    "seed",
    "rng_family",
)


def _normalize_rule(rule) -> tuple[str, int | None]:
    if rule == "as-is":
        return ("as-is", None)
    if isinstance(rule, Mapping) and set(rule) == {"quantile"}:
        k = rule["quantile"]
    elif isinstance(rule, (tuple, list)) and len(rule) == 2 and rule[0] == "quantile":
        k = rule[1]
    else:
        raise ValueError(f"unknown binning rule {rule!r}")
    if not isinstance(k, int) or k < 2:
        raise ValueError(f"quantile bin count must be an integer >= 2, got {k!r}")
    return ("quantile", k)


@dataclass
class DatasetSchema:
    """Column layout of an input CSV: z/d/y names plus stratum covariates.

    binning maps a covariate column to "as-is" (categorical) or
    {"quantile": k}; unlisted columns default to as-is.
    """

    z_col: str = "z"
    d_col: str = "d"
    y_col: str = "y"
    strata_cols: tuple[str, ...] = ("stratum",)
    binning: Mapping[str, object] | None = None
    missing_policy: str = "own-stratum"

    def __post_init__(self) -> None:
        self.strata_cols = tuple(self.strata_cols)
        names = (self.z_col, self.d_col, self.y_col) + self.strata_cols
        if len(set(names)) != len(names):
            raise ValueError("schema column names must be distinct")
        if self.missing_policy != "own-stratum":
            raise ValueError(f"unknown missing_policy {self.missing_policy!r}")
        rules = dict(self.binning or {})
        for col in rules:
            if col not in self.strata_cols:
                raise ValueError(f"binning rule for non-stratum column {col!r}")
        self.binning = {
            col: _normalize_rule(rules.get(col, "as-is")) for col in self.strata_cols
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "DatasetSchema":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown schema keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def from_json_file(cls, path: str) -> "DatasetSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _parse_binary(raw: str | None, col: str, line: int) -> int:
    if raw is None or raw.strip() == "":
        raise MalformedRow(line, f"missing {col}")
    try:
        v = float(raw)
    except ValueError:
        raise MalformedRow(line, f"{col}={raw!r} is not numeric") from None
    if v not in (0.0, 1.0):
        raise MalformedRow(line, f"{col}={raw!r} must be 0 or 1")
    return int(v)


def _parse_outcome(raw: str | None, col: str, line: int) -> float:
    if raw is None or raw.strip() == "":
        raise MalformedRow(line, f"missing {col}")
    try:
        v = float(raw)
    except ValueError:
        raise MalformedRow(line, f"{col}={raw!r} is not numeric") from None
    if not math.isfinite(v):
        raise MalformedRow(line, f"{col}={raw!r} is not finite")
    return v


def _quantile_labels(
    raw: list[str | None], k: int, col: str, lines: list[int]
) -> list[str]:
    """Rank-based k-quantile bins with midpoint tie ranks; missing values
    keep their own label and stay out of the ranking."""
    present_idx = []
    values = []
    labels: list[str | None] = [None] * len(raw)
    for i, s in enumerate(raw):
        if s is None or s.strip() == "":
            labels[i] = "missing"
            continue
        try:
            v = float(s)
        except ValueError:
            raise MalformedRow(lines[i], f"{col}={s!r} is not numeric") from None
        if not math.isfinite(v):
            raise MalformedRow(lines[i], f"{col}={s!r} is not finite")
        present_idx.append(i)
        values.append(v)
    if present_idx:
        ranks = rankdata(values, method="average")
        n = len(values)
        bins = np.ceil(ranks * k / n).astype(int) - 1
        if len(np.unique(bins)) < k:
            raise EmptyBin(f"quantile({k}) on column {col!r} leaves an empty bin")
        for i, b in zip(present_idx, bins):
            labels[i] = f"q{b + 1}"
    return [s for s in labels]  # all slots filled


def load_csv(path: str, schema: DatasetSchema) -> ObservedSample:
    """Parse a dataset CSV into an ObservedSample.

    Malformed rows are rejected with their physical line number; missing
    covariate values become the "missing" stratum; no strata_cols puts
    every unit in a single "all" stratum.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyFile(path)
        for col in (schema.z_col, schema.d_col, schema.y_col, *schema.strata_cols):
            if col not in reader.fieldnames:
                raise MissingColumn(col)
        z: list[int] = []
        d: list[int] = []
        y: list[float] = []
        raw_strata: dict[str, list[str | None]] = {c: [] for c in schema.strata_cols}
        lines: list[int] = []
        for row in reader:
            line = reader.line_num
            if row.get(None) is not None or None in row.values():
                raise MalformedRow(line, "wrong number of fields")
            z.append(_parse_binary(row[schema.z_col], schema.z_col, line))
            d.append(_parse_binary(row[schema.d_col], schema.d_col, line))
            y.append(_parse_outcome(row[schema.y_col], schema.y_col, line))
            for col in schema.strata_cols:
                raw_strata[col].append(row[col])
            lines.append(line)
    if not z:
        raise EmptyFile(path)

    col_labels: dict[str, list[str]] = {}
    for col in schema.strata_cols:
        kind, k = schema.binning[col]
        if kind == "quantile":
            col_labels[col] = _quantile_labels(raw_strata[col], k, col, lines)
        else:
            col_labels[col] = [
                "missing" if (s is None or s.strip() == "") else s
                for s in raw_strata[col]
            ]
    if len(schema.strata_cols) == 0:
        strata = ["all"] * len(z)
    elif len(schema.strata_cols) == 1:
        strata = col_labels[schema.strata_cols[0]]
    else:
        strata = [
            "|".join(f"{col}={col_labels[col][i]}" for col in schema.strata_cols)
            for i in range(len(z))
        ]
    return ObservedSample.from_arrays(z=z, d=d, y=y, strata=strata)


def save_csv(sample: ObservedSample, fh: IO[str]) -> None:
    """Emit a sample as z,d,y,stratum CSV readable by the default schema.

    Stratum labels are stringified, so emit-then-load reproduces the exact
    sample whenever labels are strings (the partition is preserved always).
    """
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["z", "d", "y", "stratum"])
    labels = sample.stratum_labels
    for i in range(sample.n):
        writer.writerow(
            [
                int(sample.z[i]),
                int(sample.d[i]),
                repr(float(sample.y[i])),
                str(labels[sample.strata[i]]),
            ]
        )


def load_science_csv(path: str) -> ScienceTable:
    """Parse a potential-outcome table CSV: y0,y1,d0,d1 plus optional stratum."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyFile(path)
        for col in ("y0", "y1", "d0", "d1"):
            if col not in reader.fieldnames:
                raise MissingColumn(col)
        has_stratum = "stratum" in reader.fieldnames
        y0, y1, d0, d1, strata = [], [], [], [], []
        for row in reader:
            line = reader.line_num
            if row.get(None) is not None or None in row.values():
                raise MalformedRow(line, "wrong number of fields")
            y0.append(_parse_outcome(row["y0"], "y0", line))
            y1.append(_parse_outcome(row["y1"], "y1", line))
            d0.append(_parse_binary(row["d0"], "d0", line))
            d1.append(_parse_binary(row["d1"], "d1", line))
            if has_stratum:
                raw = row["stratum"]
                strata.append("missing" if raw is None or raw == "" else raw)
    if not y0:
        raise EmptyFile(path)
    return ScienceTable.from_arrays(
        y0=y0, y1=y1, d0=d0, d1=d1, strata=strata if strata else None
    )


@dataclass(frozen=True)
class ReportRow:
    """One estimator line of the headline report; None marks an
    unavailable cell."""

    method: str
    pi_c_hat: float | None
    estimate: float | None
    se_bloom: float | None
    se_delta: float | None
    pct_se: float | None
    n: int | None
    p_value: float | None


@dataclass(frozen=True)
class ReportTable:
    rows: tuple[ReportRow, ...]
    se_kind: str  # bloom | delta | both


@dataclass(frozen=True)
class StratumRow:
    stratum: str
    n: int
    pi_c_hat: float
    cace: float | None  # None when f_hat_g = 0: the stratum IV is undefined
    se_bloom: float | None


def _two_sided_p(estimate: float, se: float | None) -> float | None:
    if se is None or se == 0.0 or not math.isfinite(se):
        return None
    return math.erfc(abs(estimate / se) / math.sqrt(2.0))


def analyze(
    sample: ObservedSample,
    estimators: Sequence[str] = DEFAULT_REPORT_ESTIMATORS,
    config: EstimatorConfig | None = None,
    se: str = "bloom",
) -> ReportTable:
    """Run the requested estimators and assemble the headline table.

    %SE compares each estimator's SE to the unstratified one (computed
    even when UNSTRAT is not in the requested set); p-values use the Bloom
    SE with a normal approximation. Estimator failures leave unavailable
    cells rather than aborting.
    """
    if se not in ("bloom", "delta", "both"):
        raise ValueError(f"se must be bloom, delta, or both, got {se!r}")
    unknown = [t for t in estimators if t not in METHODS]
    if unknown:
        raise ValueError(f"unknown estimator names: {unknown}")
    config = config or EstimatorConfig()

    base_bloom: float | None = None
    base_delta: float | None = None
    try:
        base = estimate(sample, "UNSTRAT", config)
        base_bloom, base_delta = base.se_bloom, base.se_delta
    except EstimationError:
        pass

    def pct(se_b: float | None, se_d: float | None) -> float | None:
        ref, own = (base_delta, se_d) if se == "delta" else (base_bloom, se_b)
        if ref is None or own is None or ref == 0.0:
            return None
        return 100.0 * own / ref

    rows = []
    for tag in estimators:
        try:
            rep = estimate(sample, tag, config)
        except EstimationError:
            rows.append(ReportRow(tag, None, None, None, None, None, None, None))
            continue
        rows.append(
            ReportRow(
                method=tag,
                pi_c_hat=rep.f_hat,
                estimate=rep.estimate,
                se_bloom=rep.se_bloom,
                se_delta=rep.se_delta,
                pct_se=pct(rep.se_bloom, rep.se_delta),
                n=rep.n_used,
                p_value=_two_sided_p(rep.estimate, rep.se_bloom),
            )
        )
    return ReportTable(rows=tuple(rows), se_kind=se)


def stratum_report(sample: ObservedSample) -> tuple[StratumRow, ...]:
    """Per-stratum compliance, IV estimate, and Bloom SE; strata with
    f_hat_g = 0 get an undefined estimate."""
    rows = []
    for s in stratum_summaries(sample):
        if s.f_hat == 0.0:
            cace = se = None
        else:
            cace = s.itt_hat / s.f_hat
            try:
                se = math.sqrt(var_itt_neyman(s)) / abs(s.f_hat)
            except EstimationError:
                se = None
        rows.append(
            StratumRow(
                stratum=str(s.g),
                n=s.n_g,
                pi_c_hat=s.f_hat,
                cace=cace,
                se_bloom=se,
            )
        )
    return tuple(rows)


def _fmt(x: float | int | str | None) -> str:
    if x is None:
        return ""
    if isinstance(x, (str, int)):
        return str(x)
    if not math.isfinite(x):
        return "nan"
    return f"{x:.4g}"


def _report_columns(se_kind: str) -> list[tuple[str, str]]:
    cols = [("method", "method"), ("pi_c_hat", "pi_c_hat"), ("estimate", "estimate")]
    if se_kind in ("bloom", "both"):
        cols.append(("se_bloom", "se_bloom"))
    if se_kind in ("delta", "both"):
        cols.append(("se_delta", "se_delta"))
    cols += [("pct_se", "pct_se"), ("n", "n"), ("p_value", "p_value")]
    return cols


def report_csv(table: ReportTable) -> str:
    """Fixed-format CSV rendering: 4 significant digits, byte-stable."""
    cols = _report_columns(table.se_kind)
    out = [",".join(name for name, _ in cols)]
    for row in table.rows:
        out.append(",".join(_fmt(getattr(row, attr)) for _, attr in cols))
    return "\n".join(out) + "\n"


def stratum_csv(rows: Iterable[StratumRow]) -> str:
    out = ["stratum,n,pi_c_hat,cace,se_bloom"]
    for r in rows:
        cace = "undefined" if r.cace is None else _fmt(r.cace)
        out.append(
            f"{r.stratum},{r.n},{_fmt(r.pi_c_hat)},{cace},{_fmt(r.se_bloom)}"
        )
    return "\n".join(out) + "\n"


def _clean(x: float | None) -> float | None:
    if x is None or not math.isfinite(x):
        return None
    return float(x)


def report_json(table: ReportTable, strata: Iterable[StratumRow] | None = None) -> str:
    obj: dict = {
        "methods": [
            {
                "method": r.method,
                "pi_c_hat": _clean(r.pi_c_hat),
                "estimate": _clean(r.estimate),
                "se_bloom": _clean(r.se_bloom),
                "se_delta": _clean(r.se_delta),
                "pct_se": _clean(r.pct_se),
                "n": r.n,
                "p_value": _clean(r.p_value),
            }
            for r in table.rows
        ]
    }
    if strata is not None:
        obj["strata"] = [
            {
                "stratum": r.stratum,
                "n": r.n,
                "pi_c_hat": _clean(r.pi_c_hat),
                "cace": _clean(r.cace),
                "se_bloom": _clean(r.se_bloom),
            }
            for r in strata
        ]
    return json.dumps(obj, indent=2) + "\n"


def _shortest(x: float) -> str:
    return repr(float(x))


def write_metrics_csv(metrics: Iterable[ScenarioMetrics], fh: IO[str]) -> None:
    """Machine-facing metrics table; floats use shortest round-trip decimals
    so parsing the file back reproduces exact values."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(METRICS_COLUMNS)
    for m in metrics:
        for row in m.rows:
            writer.writerow(
                [
                    m.scenario_id,
                    m.n,
                    _shortest(m.pi_c_target),
                    int(m.predicts_c),
                    int(m.predicts_y),
                    _shortest(m.nt_shift),
                    int(m.het_tau),
                    row.estimator,
                    _shortest(row.bias),
                    _shortest(row.true_se),
                    _shortest(row.rmse),
                    _shortest(row.cal_bloom),
                    _shortest(row.cal_delta),
                    _shortest(row.rel_instab_bloom),
                    _shortest(row.rel_instab_delta),
                    _shortest(row.drop_rate),
                    _shortest(row.fail_rate),
                    _shortest(row.mean_n_used),
                    m.seed,
                    m.rng_family,
                ]
            )


_METRICS_INT = {"n", "predicts_c", "predicts_y", "het_tau", "seed"}
_METRICS_STR = {"scenario_id", "estimator", "rng_family"}


def read_metrics_csv(fh: IO[str]) -> list[dict]:
    reader = csv.DictReader(fh)
    if reader.fieldnames is None:
        raise EmptyFile("metrics stream")
    if tuple(reader.fieldnames) != METRICS_COLUMNS:
        raise MissingColumn(f"expected metrics columns, got {reader.fieldnames}")
    rows = []
    for raw in reader:
        row: dict = {}
        for col in METRICS_COLUMNS:
            v = raw[col]
            if col in _METRICS_STR:
                row[col] = v
            elif col in _METRICS_INT:
                row[col] = int(v)
            else:
                row[col] = float(v)
        rows.append(row)
    return rows


def _config_from_dict(obj: Mapping) -> ScenarioConfig | ConcentrationConfig:
    cls = ConcentrationConfig if ("r" in obj or "target_p" in obj) else ScenarioConfig
    known = {f.name for f in fields(cls)}
    unknown = set(obj) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = dict(obj)
    for key in ("estimators", "weights"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return cls(**kwargs)


def _load_configs(path: str) -> list[ScenarioConfig | ConcentrationConfig]:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if isinstance(obj, Mapping):
        obj = [obj]
    if not isinstance(obj, list) or not obj:
        raise ValueError("config JSON must be an object or a non-empty array")
    return [_config_from_dict(o) for o in obj]


def _run_one(config, threads: int) -> ScenarioMetrics:
    if isinstance(config, ConcentrationConfig):
        return run_concentration(config, threads=threads)
    return run_scenario(config, threads=threads)


def _write_text(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _metrics_text(metrics: Iterable[ScenarioMetrics]) -> str:
    buf = io.StringIO()
    write_metrics_csv(metrics, buf)
    return buf.getvalue()


def _csv_floats(raw: str, flag: str) -> list[float]:
    try:
        return [float(s) for s in raw.split(",") if s.strip() != ""]
    except ValueError:
        raise ValueError(f"{flag} must be a comma-separated list of numbers") from None


def _cmd_analyze(args: argparse.Namespace) -> int:
    schema = (
        DatasetSchema.from_json_file(args.schema) if args.schema else DatasetSchema()
    )
    sample = validate(load_csv(args.data, schema))
    tags = tuple(t.strip() for t in args.estimators.split(",") if t.strip())
    config = EstimatorConfig(
        dss_threshold=args.dss_threshold, dsf_f_min=args.dsf_fmin
    )
    table = analyze(sample, tags, config, se=args.se)
    strata = stratum_report(sample) if args.by_stratum else None
    if args.out == "json":
        sys.stdout.write(report_json(table, strata))
    else:
        sys.stdout.write(report_csv(table))
        if strata is not None:
            sys.stdout.write("\n" + stratum_csv(strata))
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    configs = _load_configs(args.config)
    metrics = [_run_one(c, args.threads) for c in configs]
    _write_text(args.out, _metrics_text(metrics))
    return 0


def _cmd_sweep_r(args: argparse.Namespace) -> int:
    weights = tuple(_csv_floats(args.weights, "--weights"))
    configs = [
        ConcentrationConfig(
            r=r,
            target_p=args.target_p,
            weights=weights,
            n=args.n,
            replications=args.replications,
            seed=args.seed + i,
            heterogeneous_tau=args.het_tau,
            predicts_outcome=args.predicts_outcome,
            never_taker_shift=args.nt_shift,
        )
        for i, r in enumerate(_csv_floats(args.r, "--r"))
    ]
    metrics = [run_concentration(c, threads=args.threads) for c in configs]
    _write_text(args.out, _metrics_text(metrics))
    return 0


def _cmd_random_strata(args: argparse.Namespace) -> int:
    ks = [int(k) for k in _csv_floats(args.k, "--k")]
    configs = [
        ScenarioConfig(
            n=args.n,
            target_pi_c=args.pi_c,
            replications=args.replications,
            seed=args.seed + i,
            random_strata_k=k,
        )
        for i, k in enumerate(ks)
    ]
    metrics = [run_scenario(c, threads=args.threads) for c in configs]
    _write_text(args.out, _metrics_text(metrics))
    return 0


def _cmd_theory(args: argparse.Namespace) -> int:
    table = load_science_csv(args.science_table)
    p = args.p
    m = moments(table, p)

    def attempt(fn):
        try:
            return _clean(fn())
        except EstimationError:
            return None

    out: dict = {
        "n": table.n,
        "p": p,
        "num_strata": table.num_strata,
        "pi_c": _clean(table.pi_c),
        "pi_a": _clean(table.pi_a),
        "pi_n": _clean(table.pi_n),
        "itt": _clean(table.itt),
        "cace": attempt(lambda: table.cace),
        "asyvar_iv": attempt(lambda: asyvar_iv(m)),
        "asyvar_iv_ps": attempt(lambda: asyvar_iv_ps(m)),
    }
    if table.one_sided:
        out["bias_exact_conditional"] = attempt(
            lambda: bias_one_sided_exact(table, p, convention="condition")
        )
        out["bias_taylor_hypergeometric"] = attempt(
            lambda: bias_one_sided_taylor(m, variant="hypergeometric")
        )
        out["bias_taylor_binomial"] = attempt(
            lambda: bias_one_sided_taylor(m, variant="binomial")
        )
    else:
        out["bias_taylor_two_sided"] = attempt(lambda: bias_two_sided_taylor(m))
    if not args.no_enumeration:
        try:
            enum = enumerate_expectation(table, p, "UNSTRAT", convention="condition")
            cace = out["cace"]
            out["enum_unstrat"] = {
                "mean": _clean(enum.mean),
                "variance": _clean(enum.variance),
                "bias": _clean(enum.mean - cace) if cace is not None else None,
                "undefined_mass": _clean(enum.undefined_mass),
                "n_assignments": enum.n_assignments,
            }
        except EstimationError:
            out["enum_unstrat"] = None
    sys.stdout.write(json.dumps(out, indent=2) + "\n")
    return 0


class _Parser(argparse.ArgumentParser):
    # usage problems are input errors: print help to stderr and exit 1
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise SystemExit(1)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ivstrat", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="estimate treatment effects from a dataset CSV")
    pa.add_argument("--data", required=True, help="dataset CSV path")
    pa.add_argument("--schema", help="dataset schema JSON path (default: z,d,y,stratum)")
    pa.add_argument(
        "--estimators",
        default=",".join(DEFAULT_REPORT_ESTIMATORS),
        help="comma-separated estimator names",
    )
    pa.add_argument("--dss-threshold", type=float, default=0.02)
    pa.add_argument("--dsf-fmin", type=float, default=10.0)
    pa.add_argument("--se", choices=("bloom", "delta", "both"), default="bloom")
    pa.add_argument("--out", choices=("csv", "json"), default="csv")
    pa.add_argument("--by-stratum", action="store_true", help="append per-stratum table")
    pa.set_defaults(func=_cmd_analyze)

    ps = sub.add_parser("simulate", help="run scenarios from a JSON config")
    ps.add_argument("--config", required=True, help="scenario config JSON path")
    ps.add_argument("--out", default="-", help="metrics CSV path, - for stdout")
    ps.add_argument("--threads", type=int, default=1)
    ps.set_defaults(func=_cmd_simulate)

    pr = sub.add_parser("sweep-r", help="compliance-concentration sweep")
    pr.add_argument("--r", default="0,0.05,0.1,0.15,0.2,0.25,0.5,0.75,1")
    pr.add_argument("--target-p", type=float, default=0.15)
    pr.add_argument("--weights", default="0.35,0.30,0.20,0.15")
    pr.add_argument("--n", type=int, default=2000)
    pr.add_argument("--replications", type=int, default=1000)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--het-tau", action="store_true")
    pr.add_argument("--predicts-outcome", action="store_true")
    pr.add_argument("--nt-shift", type=float, default=0.0)
    pr.add_argument("--out", default="-")
    pr.add_argument("--threads", type=int, default=1)
    pr.set_defaults(func=_cmd_sweep_r)

    pk = sub.add_parser("random-strata", help="uninformative-strata study")
    pk.add_argument("--k", default="1,2,3,6,12")
    pk.add_argument("--n", type=int, default=500)
    pk.add_argument("--pi-c", type=float, default=0.05)
    pk.add_argument("--replications", type=int, default=1000)
    pk.add_argument("--seed", type=int, default=0)
    pk.add_argument("--out", default="-")
    pk.add_argument("--threads", type=int, default=1)
    pk.set_defaults(func=_cmd_random_strata)

    pt = sub.add_parser(
        "theory", help="analytic bias/variance oracles for a potential-outcome table"
    )
    pt.add_argument("--science-table", required=True, help="y0,y1,d0,d1[,stratum] CSV")
    pt.add_argument("--p", type=float, default=0.5, help="treatment probability")
    pt.add_argument("--no-enumeration", action="store_true")
    pt.set_defaults(func=_cmd_theory)

    return parser


def cli_main(argv: Sequence[str] | None = None) -> int:
    """Entry point returning an exit code: 0 success, 1 input error,
    2 estimation infeasibility."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (MalformedRow, MissingColumn, EmptyFile, EmptyBin) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except EstimationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
