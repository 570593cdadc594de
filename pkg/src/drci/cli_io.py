"""CSV ingestion, configuration, reporting, and the ``drci`` command line.

Commands: ``att``, ``atc``, ``did``, ``cic``, ``iv`` produce a JSON report;
``simulate`` emits the Monte Carlo bias table as CSV; ``sweep`` solves both
directions over a gamma x delta grid and emits CSV.  Configuration comes
from an optional JSON file with CLI flags taking precedence.  Exit codes:
0 optimal, 2 infeasible, 1 error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import re
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .distributions import Dataset
from .dro_solvers import (
    BoundResult,
    SensitivityConfig,
    atc_bound,
    distributional_att_bound,
    marginal_att_bound,
    tv_att_bound,
)
from .extensions import cic_att_bound, did_att_bound, iv_att_bound
from .synthetic import Scenario, run_monte_carlo

__all__ = ["ColumnMap", "RunConfig", "Report", "load_csv", "run", "sweep", "main"]

_COMMANDS = ("att", "atc", "did", "cic", "iv", "simulate", "sweep")
_MODELS = ("marginal", "distributional", "tv")


@dataclass(frozen=True)
class ColumnMap:
    """Input column names; ``baseline``/``instrument`` are opt-in."""

    outcome: str = "y"
    treatment: str = "t"
    baseline: str | None = None
    instrument: str | None = None
    covariate_prefix: str = "x"


@dataclass
class RunConfig:
    """Merged configuration for one CLI invocation."""

    command: str
    model: str = "marginal"
    gamma: float = 1.0
    delta: float = 1.0
    epsilon: float = math.inf
    lambda_tv: float = 0.0
    m: int = 50
    balance_lambda: float = 0.0
    balance_epsilon: float | None = None
    direction: str = "lower"
    ks_mode: str = "grid"
    input: str | None = None
    output: str | None = None
    columns: ColumnMap = field(default_factory=ColumnMap)
    seed: int = 0
    log_outcome: bool = False
    log_offset: float = 1.0
    emit_weights: bool = False
    # simulate-only knobs
    tau1: float = 2.0
    tau2: float = 3.0
    p: float = 0.5
    n: int = 100
    reps: int = 1000
    gammas: tuple[float, ...] = (2.0, 3.0, 5.0)
    deltas: tuple[float, ...] = ()
    models: tuple[str, ...] = ("distributional", "marginal")

    def __post_init__(self):
        if self.command not in _COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.model not in _MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if self.command in ("did", "cic", "iv") and self.model != "distributional":
            raise ValueError(f"{self.command} requires the distributional model")

    def sensitivity(self) -> SensitivityConfig:
        return SensitivityConfig(
            gamma=self.gamma,
            delta=self.delta,
            epsilon=self.epsilon,
            lambda_tv=self.lambda_tv,
            m=self.m,
            balance_lambda=self.balance_lambda,
            balance_epsilon=self.balance_epsilon,
            direction=self.direction,
            ks_mode=self.ks_mode,
        )

    def echo(self) -> dict:
        out = asdict(self)
        out["epsilon"] = _json_float(self.epsilon)
        # normalize containers so the report round-trips through JSON exactly
        return json.loads(json.dumps(out))


def _json_float(x):
    """Map non-finite floats to None so reports stay strict-JSON."""
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return None
    return x


@dataclass(frozen=True)
class Report:
    """JSON-serializable result of one solve; round-trips losslessly."""

    estimate: float | None
    direction: str
    gamma: float
    delta: float
    epsilon: float | None
    active_shift: float | None
    se: float | None
    status: str
    n: int
    n1: int
    n0: int
    weights: dict[str, float] | None
    runtime_ms: float
    config: dict

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "Report":
        raw = json.loads(text)
        return cls(**raw)


def load_csv(path: str, columns: ColumnMap | None = None) -> Dataset:
    """Parse a UTF-8 CSV with a header row into a Dataset.

    Bad rows are reported by 1-based data-row number; the treatment column
    must be exactly 0 or 1.  Covariates are every column starting with the
    covariate prefix (natural-ordered when the suffixes are numeric).
    """
    columns = columns or ColumnMap()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError("input CSV is empty")
        header = list(reader.fieldnames)
        for name, col in (("outcome", columns.outcome),
                          ("treatment", columns.treatment),
                          ("baseline", columns.baseline),
                          ("instrument", columns.instrument)):
            if col is not None and col not in header:
                raise ValueError(f"missing {name} column {col!r}")
        cov_cols = _covariate_columns(header, columns)
        rows = list(reader)
    if not rows:
        raise ValueError("input CSV has no data rows")

    y, t, yb, z, x = [], [], [], [], []
    problems = []
    for rownum, row in enumerate(rows, start=1):
        try:
            y.append(_parse_float(row, columns.outcome))
            t.append(_parse_binary(row, columns.treatment))
            if columns.baseline is not None:
                yb.append(_parse_float(row, columns.baseline))
            if columns.instrument is not None:
                z.append(_parse_binary(row, columns.instrument))
            x.append([_parse_float(row, c) for c in cov_cols])
        except ValueError as exc:
            problems.append(f"row {rownum}: {exc}")
    if problems:
        raise ValueError("bad input rows: " + "; ".join(problems[:10]))
    return Dataset(
        y=np.asarray(y),
        t=np.asarray(t),
        y_b=np.asarray(yb) if yb else None,
        z=np.asarray(z) if z else None,
        x=np.asarray(x) if cov_cols else None,
    )


def _covariate_columns(header, columns: ColumnMap) -> list[str]:
    reserved = {columns.outcome, columns.treatment, columns.baseline,
                columns.instrument}
    cands = [c for c in header
             if c not in reserved and c.startswith(columns.covariate_prefix)]
    suffixes = [c[len(columns.covariate_prefix):] for c in cands]
    if cands and all(re.fullmatch(r"\d+", s) for s in suffixes):
        cands.sort(key=lambda c: int(c[len(columns.covariate_prefix):]))
    else:
        cands.sort()
    return cands


def _parse_float(row: dict, col: str) -> float:
    raw = (row.get(col) or "").strip()
    if not raw:
        raise ValueError(f"missing value in column {col!r}")
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"non-numeric value {raw!r} in column {col!r}") from None


def _parse_binary(row: dict, col: str) -> int:
    value = _parse_float(row, col)
    if value not in (0.0, 1.0):
        raise ValueError(f"column {col!r} must be 0/1, got {value:g}")
    return int(value)


def _log_transform(data: Dataset, offset: float) -> Dataset:
    shifted = data.y + offset
    if np.any(shifted <= 0):
        raise ValueError("log transform needs outcome + offset > 0")
    y = np.log(shifted)
    y_b = None
    if data.y_b is not None:
        shifted_b = data.y_b + offset
        if np.any(shifted_b <= 0):
            raise ValueError("log transform needs baseline + offset > 0")
        y_b = np.log(shifted_b)
    return Dataset(y=y, t=data.t, y_b=y_b, z=data.z, x=data.x)


def _solve(config: RunConfig, data: Dataset) -> BoundResult:
    sens = config.sensitivity()
    if config.command == "att":
        if config.model == "marginal":
            return marginal_att_bound(data, config.gamma, config.direction)
        if config.model == "tv":
            return tv_att_bound(data, config.lambda_tv, config.direction)
        return distributional_att_bound(data, sens)
    if config.command == "atc":
        return atc_bound(data, config.model, sens)
    if config.command == "did":
        return did_att_bound(data, sens)
    if config.command == "cic":
        return cic_att_bound(data, sens)
    if config.command == "iv":
        return iv_att_bound(data, sens)
    raise ValueError(f"run() does not handle command {config.command!r}")


def run(config: RunConfig, data: Dataset | None = None) -> Report:
    """Load (unless given), solve, and wrap the result in a Report."""
    start = time.perf_counter()
    if data is None:
        if config.input is None:
            raise ValueError("no input file configured")
        data = load_csv(config.input, config.columns)
    if config.log_outcome:
        data = _log_transform(data, config.log_offset)
    result = _solve(config, data)
    runtime_ms = (time.perf_counter() - start) * 1000.0
    weights = None
    if config.emit_weights and result.status == "optimal":
        weights = {str(k): v for k, v in sorted(result.weights.items())}
    return Report(
        estimate=_json_float(result.estimate),
        direction=result.direction,
        gamma=config.gamma,
        delta=config.delta,
        epsilon=_json_float(config.epsilon),
        active_shift=_json_float(result.active_shift),
        se=_json_float(result.se),
        status=result.status,
        n=data.n,
        n1=data.n1,
        n0=data.n0,
        weights=weights,
        runtime_ms=runtime_ms,
        config=config.echo(),
    )


def sweep(config: RunConfig, gamma_list, delta_list, data: Dataset | None = None) -> str:
    """CSV table over the gamma x delta grid, both directions per cell."""
    if not gamma_list or not delta_list:
        raise ValueError("sweep needs nonempty gamma and delta grids")
    if data is None:
        if config.input is None:
            raise ValueError("no input file configured")
        data = load_csv(config.input, config.columns)
    if config.log_outcome:
        data = _log_transform(data, config.log_offset)
        base = replace(config, log_outcome=False)
    else:
        base = config
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["gamma", "delta", "lower", "upper",
                     "se_lower", "se_upper", "status"])
    for g in gamma_list:
        for d in delta_list:
            cell = replace(base, command="att", gamma=float(g), delta=float(d))
            low = run(replace(cell, direction="lower"), data)
            high = run(replace(cell, direction="upper"), data)
            status = "optimal" if (low.status == "optimal" and
                                   high.status == "optimal") else "infeasible"
            writer.writerow([
                f"{g:g}", f"{d:g}",
                _fmt(low.estimate), _fmt(high.estimate),
                _fmt(low.se), _fmt(high.se), status,
            ])
    return buf.getvalue()


def _fmt(x) -> str:
    return "" if x is None else f"{x:.6f}"


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(config: RunConfig, text: str) -> None:
    if config.output:
        _write_atomic(config.output, text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


# ---------------------------------------------------------------------------
# argument parsing


def _float_list(raw: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in raw.split(",") if tok.strip())


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drci",
        description="Distributionally robust treatment-effect bounds",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--input")
        p.add_argument("--output")
        p.add_argument("--model", choices=_MODELS)
        p.add_argument("--gamma", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--lambda-tv", dest="lambda_tv", type=float)
        p.add_argument("--m", type=int)
        p.add_argument("--direction", choices=("lower", "upper"))
        p.add_argument("--ks-mode", dest="ks_mode", choices=("grid", "exact_atoms"))
        p.add_argument("--balance-lambda", dest="balance_lambda", type=float)
        p.add_argument("--balance-epsilon", dest="balance_epsilon", type=float)
        p.add_argument("--log-outcome", dest="log_outcome", action="store_true",
                       default=None)
        p.add_argument("--log-offset", dest="log_offset", type=float)
        p.add_argument("--emit-weights", dest="emit_weights", action="store_true",
                       default=None)
        p.add_argument("--seed", type=int)
        p.add_argument("--outcome-col", dest="outcome_col")
        p.add_argument("--treatment-col", dest="treatment_col")
        p.add_argument("--baseline-col", dest="baseline_col")
        p.add_argument("--instrument-col", dest="instrument_col")
        p.add_argument("--covariate-prefix", dest="covariate_prefix")
        if name == "simulate":
            p.add_argument("--tau1", type=float)
            p.add_argument("--tau2", type=float)
            p.add_argument("--p", type=float)
            p.add_argument("--n", type=int)
            p.add_argument("--reps", type=int)
            p.add_argument("--gammas", type=_float_list)
            p.add_argument("--models")
        if name == "sweep":
            p.add_argument("--gammas", type=_float_list)
            p.add_argument("--deltas", type=_float_list)
    return parser


# IV grids default coarser: the shift-pair enumeration is quadratic in m
_IV_DEFAULT_M = 20


def build_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, JSON config file, then explicit flags."""
    merged: dict = {"command": args.command}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            file_conf = json.load(fh)
        if not isinstance(file_conf, dict):
            raise ValueError("config file must hold a JSON object")
        merged.update(file_conf)
    col_flags = {
        "outcome": getattr(args, "outcome_col", None),
        "treatment": getattr(args, "treatment_col", None),
        "baseline": getattr(args, "baseline_col", None),
        "instrument": getattr(args, "instrument_col", None),
        "covariate_prefix": getattr(args, "covariate_prefix", None),
    }
    for key, value in vars(args).items():
        if key in ("command", "config") or key.endswith("_col") or \
                key == "covariate_prefix":
            continue
        if value is not None:
            merged[key] = value
    columns_conf = dict(merged.pop("columns", {}))
    columns_conf.update({k: v for k, v in col_flags.items() if v is not None})
    if args.command in ("did", "cic") and "baseline" not in columns_conf:
        columns_conf["baseline"] = "y_b"
    if args.command == "iv" and "instrument" not in columns_conf:
        columns_conf["instrument"] = "z"
    merged["columns"] = ColumnMap(**columns_conf)
    if args.command in ("did", "cic", "iv"):
        merged.setdefault("model", "distributional")
    if args.command == "iv":
        merged.setdefault("m", _IV_DEFAULT_M)
    if isinstance(merged.get("models"), str):
        merged["models"] = tuple(merged["models"].split(","))
    for key in ("gammas", "deltas"):
        if isinstance(merged.get(key), (list, tuple)):
            merged[key] = tuple(float(v) for v in merged[key])
    if merged.get("epsilon") is None:
        merged.pop("epsilon", None)
    return RunConfig(**merged)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = build_config(args)
        if config.command == "simulate":
            table = run_monte_carlo(
                Scenario(tau1=config.tau1, tau2=config.tau2, p=config.p),
                n=config.n,
                reps=config.reps,
                models=config.models,
                gammas=config.gammas,
                delta=config.delta,
                seed=config.seed,
                m=config.m,
                ks_mode=config.ks_mode,
            )
            _emit(config, table.to_csv())
            return 0
        if config.command == "sweep":
            deltas = config.deltas or (config.delta,)
            text = sweep(config, config.gammas, deltas)
            _emit(config, text)
            return 0
        report = run(config)
        _emit(config, report.to_json())
        return 0 if report.status == "optimal" else 2
    except (ValueError, TypeError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
