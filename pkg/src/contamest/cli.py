"""Command-line front end: data ingestion, model specs, and reports.

Commands
--------
test       contamination verdict for a dataset against a model
estimate   certified lower bound on the contaminated fraction
twosample  test one dataset against another dataset as the model
sweep      deterministic grid experiment, CSV rows
oracle     exact brute-force values for tiny instances (debugging)

Count files are CSV (``category,count``, header optional) or a JSON mapping
of category to count.  Model specs are JSON with a ``kind`` field; see the
README for the schema.  Categories are aligned between data and model by
label: the dimension is the union, missing categories get count 0 on the
data side and mass 0 on the model side.

Exit codes: 0 success, 2 contaminated verdict (``test`` only), 1 any error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .distributions import (
    Distribution,
    EmpiricalCounts,
    KlBall,
    Mixture,
    ModelSet,
    Singleton,
    empirical,
    kl_divergence,
    klball_radius,
)
from .estimator import (
    DEFAULT_BISECT_TOL,
    SweepConfig,
    estimate_alpha_lower,
    gof_threshold,
    is_contaminated,
    sweep,
    two_sample_test,
)
from .oracle import exact_cstar, exact_typicality

SCHEMA_VERSION = 1

_CSV_HEADER = ("category", "count")


class CliError(ValueError):
    """User-facing error; printed as one line on stderr, exit code 1."""


@dataclass(frozen=True)
class ModelSpec:
    """Parsed model description prior to label alignment."""

    kind: str
    distributions: tuple[dict[str, float], ...]
    radius: float | None = None
    counts: dict[str, int] | None = None
    epsilon: float | None = None
    digest: str = ""


@dataclass(frozen=True)
class RunReport:
    """Serializable record of one command invocation."""

    schema_version: int
    command: str
    payload: dict

    def to_dict(self) -> dict:
        out = {"schema_version": self.schema_version, "command": self.command}
        out.update(self.payload)
        return out


# ---------------------------------------------------------------------------
# ingestion


def ingest_counts(path: str | Path, format: str | None = None) -> EmpiricalCounts:
    """Read a count file into first-appearance category order.

    ``format`` is 'csv' or 'json'; inferred from the suffix when omitted.
    Rejects negative counts, non-integer counts, and duplicate categories.
    """
    path = Path(path)
    if not path.exists():
        raise CliError(f"no such file: {path}")
    if format is None:
        format = "json" if path.suffix.lower() == ".json" else "csv"
    if format not in ("csv", "json"):
        raise CliError(f"unknown format: {format}")
    text = path.read_text()
    if format == "json":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CliError(f"unparseable file: {path}: {exc}") from exc
        if not isinstance(raw, dict) or not raw:
            raise CliError(f"unparseable file: {path}: expected a category->count mapping")
        pairs = [(str(k), v) for k, v in raw.items()]
    else:
        pairs = []
        try:
            for row in csv.reader(io.StringIO(text)):
                if not row or all(not cell.strip() for cell in row):
                    continue
                if len(row) != 2:
                    raise CliError(f"unparseable file: {path}: expected 2 columns")
                if tuple(c.strip().lower() for c in row) == _CSV_HEADER:
                    continue
                pairs.append((row[0].strip(), row[1].strip()))
        except csv.Error as exc:
            raise CliError(f"unparseable file: {path}: {exc}") from exc
        if not pairs:
            raise CliError(f"unparseable file: {path}: no data rows")
    labels: list[str] = []
    values: list[int] = []
    for label, value in pairs:
        if label in labels:
            raise CliError(f"duplicate category: {label}")
        try:
            as_float = float(value)
        except (TypeError, ValueError):
            raise CliError(f"unparseable count for category {label}: {value!r}")
        if not math.isfinite(as_float) or as_float != int(as_float):
            raise CliError(f"non-integer count for category {label}: {value!r}")
        as_int = int(as_float)
        if as_int < 0:
            raise CliError(f"negative count for category {label}: {as_int}")
        labels.append(label)
        values.append(as_int)
    return EmpiricalCounts(np.asarray(values, dtype=np.int64), labels=tuple(labels))


def serialize_counts(counts: EmpiricalCounts, path: str | Path, format: str = "csv") -> None:
    """Write counts back out in a form ``ingest_counts`` reads identically."""
    path = Path(path)
    labels = counts.labels or tuple(str(i) for i in range(counts.n))
    if format == "json":
        path.write_text(
            json.dumps({l: int(c) for l, c in zip(labels, counts.counts)}, indent=0)
        )
    elif format == "csv":
        lines = ["category,count"]
        lines += [f"{l},{int(c)}" for l, c in zip(labels, counts.counts)]
        path.write_text("\n".join(lines) + "\n")
    else:
        raise CliError(f"unknown format: {format}")


# ---------------------------------------------------------------------------
# model specs


def _probs_mapping(node, base: Path, what: str) -> dict[str, float]:
    if isinstance(node, str):
        ref = base / node
        if not ref.exists():
            raise CliError(f"no such file: {ref}")
        try:
            node = json.loads(ref.read_text())
        except json.JSONDecodeError as exc:
            raise CliError(f"unparseable file: {ref}: {exc}") from exc
    if not isinstance(node, dict) or not node:
        raise CliError(f"model spec: {what} must be a category->mass mapping or file path")
    out: dict[str, float] = {}
    for k, v in node.items():
        try:
            out[str(k)] = float(v)
        except (TypeError, ValueError):
            raise CliError(f"model spec: bad mass for category {k}: {v!r}")
    return out


def load_model_spec(path: str | Path) -> ModelSpec:
    path = Path(path)
    if not path.exists():
        raise CliError(f"no such file: {path}")
    text = path.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"unparseable file: {path}: {exc}") from exc
    if not isinstance(raw, dict) or "kind" not in raw:
        raise CliError(f"model spec: missing 'kind' in {path}")
    digest = hashlib.sha256(
        json.dumps(raw, sort_keys=True).encode("utf-8")
    ).hexdigest()[:12]
    kind = str(raw["kind"])
    base = path.parent
    if kind == "singleton":
        probs = _probs_mapping(raw.get("probs"), base, "probs")
        return ModelSpec(kind=kind, distributions=(probs,), digest=digest)
    if kind == "mixture":
        comps = raw.get("components")
        if not isinstance(comps, list) or len(comps) < 2:
            raise CliError("model spec: mixture needs a list of >= 2 components")
        dists = tuple(_probs_mapping(c, base, "component") for c in comps)
        return ModelSpec(kind=kind, distributions=dists, digest=digest)
    if kind == "klball":
        if "center" in raw and "radius" in raw:
            center = _probs_mapping(raw["center"], base, "center")
            radius = float(raw["radius"])
            if radius <= 0:
                raise CliError("model spec: radius must be positive")
            return ModelSpec(kind=kind, distributions=(center,), radius=radius, digest=digest)
        if "counts" in raw and "epsilon" in raw:
            counts_map = raw["counts"]
            if not isinstance(counts_map, dict) or not counts_map:
                raise CliError("model spec: counts must be a category->count mapping")
            counts = {str(k): int(v) for k, v in counts_map.items()}
            return ModelSpec(
                kind=kind,
                distributions=(),
                counts=counts,
                epsilon=float(raw["epsilon"]),
                digest=digest,
            )
        raise CliError("model spec: klball needs center+radius or counts+epsilon")
    raise CliError(f"model spec: unknown kind {kind!r}")


def _model_labels(spec: ModelSpec) -> list[str]:
    labels: list[str] = []
    sources = list(spec.distributions)
    if spec.counts is not None:
        sources.append(spec.counts)
    for mapping in sources:
        for label in mapping:
            if label not in labels:
                labels.append(label)
    return labels


def align_with_model(
    counts: EmpiricalCounts, spec: ModelSpec
) -> tuple[EmpiricalCounts, ModelSet]:
    """Align data and model by category label and build the model set.

    The common dimension is the union of the categories: data categories in
    first-appearance order, then model-only categories.  Missing entries are
    zero-extended on both sides.
    """
    data_labels = list(counts.labels) if counts.labels else None
    model_labels = _model_labels(spec)
    if data_labels is None:
        # Positional data: dimensions must already agree.
        if counts.n != len(model_labels):
            raise CliError("dimension mismatch between unlabeled data and model")
        union = model_labels
        aligned_counts = EmpiricalCounts(counts.counts, labels=tuple(union))
    else:
        union = data_labels + [l for l in model_labels if l not in data_labels]
        values = np.zeros(len(union), dtype=np.int64)
        index = {l: i for i, l in enumerate(union)}
        for l, c in zip(data_labels, counts.counts):
            values[index[l]] = c
        aligned_counts = EmpiricalCounts(values, labels=tuple(union))

    def embed(mapping: dict[str, float]) -> Distribution:
        vec = np.zeros(len(union))
        for l, v in mapping.items():
            vec[union.index(l)] = v
        return Distribution(vec, labels=tuple(union))

    if spec.kind == "singleton":
        model: ModelSet = Singleton(embed(spec.distributions[0]))
    elif spec.kind == "mixture":
        model = Mixture(tuple(embed(d) for d in spec.distributions))
    else:
        if spec.counts is not None:
            vec = np.zeros(len(union), dtype=np.int64)
            for l, v in spec.counts.items():
                vec[union.index(l)] = v
            model_counts = EmpiricalCounts(vec, labels=tuple(union))
            radius = klball_radius(model_counts, spec.epsilon)
            model = KlBall(empirical(model_counts), radius)
        else:
            model = KlBall(embed(spec.distributions[0]), spec.radius)
    return aligned_counts, model


# ---------------------------------------------------------------------------
# reports


def _flatten(prefix: str, node, out: dict) -> None:
    if isinstance(node, dict):
        for k, v in node.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    else:
        out[prefix] = node


def _emit_report(report: RunReport, fmt: str, out_path: str | None) -> None:
    data = report.to_dict()
    if fmt == "json":
        text = json.dumps(data, sort_keys=True, indent=2) + "\n"
    else:
        flat: dict = {}
        _flatten("", data, flat)
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(list(flat.keys()))
        writer.writerow([_csv_cell(v) for v in flat.values()])
        text = buf.getvalue()
    sys.stdout.write(text)
    if out_path:
        Path(out_path).write_text(text)


def _csv_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _estimate_payload(result) -> dict:
    return {
        "alpha_lower": result.alpha_lower,
        "kappa": result.kappa,
        "c_lower": result.c_lower,
        "threshold_at_alpha": result.threshold_at_alpha,
        "objective_at_alpha": result.objective_at_alpha,
        "contaminated": result.contaminated,
        "bisection_width": result.bisection_width,
    }


# ---------------------------------------------------------------------------
# commands


def _cmd_test(args) -> int:
    counts = ingest_counts(args.data)
    spec = load_model_spec(args.model)
    counts, model = align_with_model(counts, spec)
    start = time.perf_counter()
    verdict, margin = is_contaminated(counts, model, args.epsilon)
    elapsed_ms = (time.perf_counter() - start) * 1e3
    threshold = gof_threshold(counts.total, counts.n, args.epsilon)
    payload = {
        "epsilon": args.epsilon,
        "model_digest": spec.digest,
        "data": {"p": counts.total, "n": counts.n},
        "result": {
            "contaminated": verdict,
            "margin": margin,
            "objective": math.inf if math.isinf(margin) else margin + threshold,
            "threshold": threshold,
        },
        "wall_time_ms": elapsed_ms,
        "version": __version__,
    }
    _emit_report(RunReport(SCHEMA_VERSION, "test", payload), args.format, args.out)
    return 2 if verdict else 0


def _cmd_estimate(args) -> int:
    counts = ingest_counts(args.data)
    spec = load_model_spec(args.model)
    counts, model = align_with_model(counts, spec)
    start = time.perf_counter()
    result = estimate_alpha_lower(counts, model, args.epsilon, args.tol)
    elapsed_ms = (time.perf_counter() - start) * 1e3
    payload = {
        "epsilon": args.epsilon,
        "bisect_tol": args.tol,
        "model_digest": spec.digest,
        "data": {"p": counts.total, "n": counts.n},
        "result": _estimate_payload(result),
        "wall_time_ms": elapsed_ms,
        "version": __version__,
    }
    _emit_report(RunReport(SCHEMA_VERSION, "estimate", payload), args.format, args.out)
    return 0


def _cmd_twosample(args) -> int:
    counts_p = ingest_counts(args.data)
    counts_q = ingest_counts(args.baseline)
    labels_p = counts_p.labels or tuple(str(i) for i in range(counts_p.n))
    labels_q = counts_q.labels or tuple(str(i) for i in range(counts_q.n))
    union = list(labels_p) + [l for l in labels_q if l not in labels_p]

    def embed(labels, counts):
        vec = np.zeros(len(union), dtype=np.int64)
        for l, c in zip(labels, counts.counts):
            vec[union.index(l)] = c
        return EmpiricalCounts(vec, labels=tuple(union))

    aligned_p = embed(labels_p, counts_p)
    aligned_q = embed(labels_q, counts_q)
    start = time.perf_counter()
    result = two_sample_test(aligned_p, aligned_q, args.epsilon, args.tol)
    elapsed_ms = (time.perf_counter() - start) * 1e3
    payload = {
        "epsilon": args.epsilon,
        "bisect_tol": args.tol,
        "model_digest": "",
        "data": {"p": aligned_p.total, "p_model": aligned_q.total, "n": len(union)},
        "radius": klball_radius(aligned_q, args.epsilon),
        "result": _estimate_payload(result),
        "wall_time_ms": elapsed_ms,
        "version": __version__,
    }
    _emit_report(RunReport(SCHEMA_VERSION, "twosample", payload), args.format, args.out)
    return 0


def _cmd_sweep(args) -> int:
    try:
        p_grid = tuple(int(x) for x in args.p.split(","))
        pi_grid = tuple(float(x) for x in args.pi.split(","))
    except ValueError as exc:
        raise CliError(f"bad grid value: {exc}") from exc
    config = SweepConfig(
        p_grid=p_grid,
        pi_grid=pi_grid,
        family=args.family,
        n=args.n,
        epsilon=args.epsilon,
        bisect_tol=args.tol,
    )
    rows = sweep(config)
    if args.format == "json":
        text = json.dumps([asdict(r) for r in rows], sort_keys=True, indent=2) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.writer(buf)
        columns = [
            "p", "pi", "family", "alpha_lower", "kappa", "ratio",
            "threshold", "objective", "wall_time_ms",
        ]
        writer.writerow(columns)
        for r in rows:
            writer.writerow([_csv_cell(getattr(r, c)) for c in columns])
        text = buf.getvalue()
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return 0


def _cmd_oracle(args) -> int:
    counts = ingest_counts(args.data)
    spec = load_model_spec(args.model)
    counts, model = align_with_model(counts, spec)
    if not isinstance(model, Singleton):
        raise CliError("oracle supports singleton models only")
    start = time.perf_counter()
    typical, tail = exact_typicality(counts, model.q0, args.epsilon)
    c_star = exact_cstar(counts, model.q0, args.epsilon)
    elapsed_ms = (time.perf_counter() - start) * 1e3
    payload = {
        "epsilon": args.epsilon,
        "model_digest": spec.digest,
        "data": {"p": counts.total, "n": counts.n},
        "result": {
            "typical": typical,
            "tail_probability": tail,
            "c_star": c_star,
            "divergence": kl_divergence(empirical(counts), model.q0),
        },
        "wall_time_ms": elapsed_ms,
        "version": __version__,
    }
    _emit_report(RunReport(SCHEMA_VERSION, "oracle", payload), args.format, args.out)
    return 0


# ---------------------------------------------------------------------------
# parser / dispatch


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 on bad usage, per the contract
        raise CliError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="contamest", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=True, tol=True):
        if model:
            p.add_argument("--model", required=True, help="model spec JSON")
        p.add_argument("--data", required=True, help="count file (CSV or JSON)")
        p.add_argument("--epsilon", type=float, default=0.05)
        if tol:
            p.add_argument("--tol", type=float, default=DEFAULT_BISECT_TOL)
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--out", default=None, help="also write the report here")

    p_test = sub.add_parser("test", help="contamination verdict at alpha = 0")
    common(p_test, tol=False)
    p_test.set_defaults(func=_cmd_test)

    p_est = sub.add_parser("estimate", help="certified contaminated-fraction bound")
    common(p_est)
    p_est.set_defaults(func=_cmd_estimate)

    p_two = sub.add_parser("twosample", help="dataset-vs-dataset contamination bound")
    common(p_two, model=False)
    p_two.add_argument("--baseline", required=True, help="model-side count file")
    p_two.set_defaults(func=_cmd_twosample)

    p_sweep = sub.add_parser("sweep", help="deterministic grid experiment")
    p_sweep.add_argument("--family", choices=("dip", "spike"), required=True)
    p_sweep.add_argument("--n", type=int, required=True)
    p_sweep.add_argument("--p", required=True, help="comma-separated sample sizes")
    p_sweep.add_argument("--pi", required=True, help="comma-separated proportions")
    p_sweep.add_argument("--epsilon", type=float, default=0.05)
    p_sweep.add_argument("--tol", type=float, default=DEFAULT_BISECT_TOL)
    p_sweep.add_argument("--format", choices=("json", "csv"), default="csv")
    p_sweep.add_argument("--out", default=None)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_oracle = sub.add_parser("oracle", help="exact brute-force values (tiny instances)")
    common(p_oracle, tol=False)
    p_oracle.set_defaults(func=_cmd_oracle)

    return parser


def run_command(argv: Sequence[str]) -> int:
    """Parse and run one command line; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
