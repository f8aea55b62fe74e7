"""Batch command surface: recode -> fit -> score -> compare -> summarize.

Every command writes CSV/JSON outputs carrying a provenance header
(tool version, config hash, input checksums, seed), so reruns with
identical inputs produce byte-identical files.  Exit codes: 0 success,
2 configuration error, 3 data error, 4 convergence failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, analytics, classical, compare
from .estimate import (
    MODELS,
    fit_em,
    import_params,
    make_grid,
    map_score_all,
    export_params,
)
from .ingest import (
    ColumnSpec,
    apply_coding,
    exclude_all_missing,
    load_csv,
    load_schemes,
    matrix_from_table,
)
from .simulate import load_simspec, simulate_responses

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NONCONVERGENCE = 4


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _config_hash(args: argparse.Namespace) -> str:
    resolved = {k: str(v) for k, v in sorted(vars(args).items()) if k != "func"}
    return hashlib.sha256(json.dumps(resolved, sort_keys=True).encode()).hexdigest()


def _header_lines(args: argparse.Namespace, inputs: list[Path]) -> list[str]:
    lines = [f"polyscale {__version__}", f"config {_config_hash(args)}"]
    for path in inputs:
        lines.append(f"input {path.name} sha256 {_sha256_file(path)}")
    if getattr(args, "seed", None) is not None:
        lines.append(f"seed {args.seed}")
    return lines


def _write_csv(path: Path, header_lines, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)


def _read_csv_dicts(path: Path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(rows))


def _split(value: str | None) -> list[str]:
    return [v for v in (value or "").split(",") if v]


def _column_spec(args: argparse.Namespace) -> ColumnSpec:
    return ColumnSpec(
        items=tuple(_split(args.items)),
        weight=args.weight,
        groups=tuple(_split(args.groups)),
        person_id=args.id,
    )


def _fmt(value: float) -> str:
    return repr(float(value))


def _check_inputs(*paths: str | None) -> list[Path]:
    out = []
    for p in paths:
        if p is None:
            continue
        path = Path(p)
        if not path.exists():
            raise ConfigError(f"input file not found: {path}")
        out.append(path)
    return out


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_recode(args) -> int:
    inputs = _check_inputs(args.input, args.scheme)
    spec = _column_spec(args)
    schemes = load_schemes(args.scheme)
    table = load_csv(args.input, spec)
    matrix = apply_coding(table, schemes)
    before = set(matrix.person_ids.tolist())
    required = _split(args.require) or list(matrix.items)
    matrix = exclude_all_missing(matrix, required)
    kept = set(matrix.person_ids.tolist())
    excluded = sorted(before - kept, key=str)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = _header_lines(args, inputs)

    columns = ["person_id", "weight"] + list(matrix.groups) + list(matrix.items)
    rows = []
    for n in range(matrix.n_persons):
        row = [matrix.person_ids[n], _fmt(matrix.weights[n])]
        row += [str(matrix.groups[g][n]) for g in matrix.groups]
        row += [
            str(int(matrix.codes[n, j])) if matrix.observed[n, j] else ""
            for j in range(matrix.n_items)
        ]
        rows.append(row)
    _write_csv(out / "recoded.csv", header, columns, rows)

    reason = "missing on all of: " + ",".join(required)
    _write_csv(
        out / "exclusions.csv",
        header,
        ["person_id", "reason"],
        [[pid, reason] for pid in excluded],
    )
    print(f"recode: kept {matrix.n_persons}, excluded {len(excluded)}")
    return EXIT_OK


def _load_recoded(args) -> tuple:
    spec = _column_spec(args)
    schemes = load_schemes(args.scheme)
    table = load_csv(args.input, spec)
    categories = {item: schemes[item].categories for item in spec.items if item in schemes}
    return matrix_from_table(table, categories), table


def cmd_fit(args) -> int:
    inputs = _check_inputs(args.input, args.scheme)
    models = _split(args.models)
    if not models:
        raise ConfigError("select at least one model via --models")
    unknown = [m for m in models if m not in MODELS]
    if unknown:
        raise ConfigError(f"unknown models {unknown}; choose from {list(MODELS)}")
    matrix, _ = _load_recoded(args)
    grid = make_grid(args.grid_points, args.grid_bound)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = _header_lines(args, inputs)

    metrics = []
    any_nonconverged = False
    for model in models:
        fit = fit_em(matrix, model, grid, tol=args.tol, max_iter=args.max_iter)
        if not fit.converged:
            any_nonconverged = True
            print(f"fit: {model} did not converge after {fit.n_iter} iterations", file=sys.stderr)
        export_params(fit, out / f"params_{model}.json")
        metrics.append(fit.metrics())
        print(
            f"fit: {model} loglik {fit.loglik:.4f} aic {fit.aic:.2f} bic {fit.bic:.2f} "
            f"iters {fit.n_iter}"
        )
    compare.write_metrics_csv(metrics, out / "fit_metrics.csv", header_lines=header)
    return EXIT_NONCONVERGENCE if any_nonconverged else EXIT_OK


def cmd_score(args) -> int:
    inputs = _check_inputs(args.input, args.scheme, args.params)
    params = import_params(args.params)
    matrix, _ = _load_recoded(args)
    scores = map_score_all(params, matrix, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = _header_lines(args, inputs)

    columns = ["person_id", "weight"] + list(matrix.groups) + [
        "theta",
        "se",
        "n_items",
        "multimodal",
    ]
    extra = []
    if args.classical:
        z_b = classical.z_score_b(matrix)
        z_w = classical.z_score_w(matrix)
        columns += ["z_score_b", "z_score_w"]
        extra = [z_b, z_w]
    rows = []
    for n in range(matrix.n_persons):
        row = [matrix.person_ids[n], _fmt(matrix.weights[n])]
        row += [str(matrix.groups[g][n]) for g in matrix.groups]
        s = scores[n]
        row += [_fmt(s.theta), _fmt(s.se), str(s.n_observed), str(int(s.multimodal))]
        for col in extra:
            row.append("" if np.isnan(col[n]) else _fmt(col[n]))
        rows.append(row)
    _write_csv(out / f"scores_{params.model}.csv", header, columns, rows)
    flagged = sum(1 for s in scores if s.n_observed == 0)
    print(f"score: {matrix.n_persons} persons ({flagged} all-missing, scored at prior mode)")
    return EXIT_OK


def cmd_compare(args) -> int:
    inputs = _check_inputs(args.metrics_a, args.metrics_b)
    met_a = {m.model: m for m in compare.read_metrics_csv(args.metrics_a)}
    met_b = {m.model: m for m in compare.read_metrics_csv(args.metrics_b)}
    if set(met_a) != set(met_b):
        raise ValueError(
            f"model sets differ: {sorted(met_a)} vs {sorted(met_b)}"
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = _header_lines(args, inputs)
    columns = [
        "model",
        "aic_a",
        "aic_b",
        "delta_aic",
        "verdict_aic",
        "bic_a",
        "bic_b",
        "delta_bic",
        "verdict_bic",
    ]
    rows = []
    for model in sorted(met_a):
        a, b = met_a[model], met_b[model]
        v_aic = compare.delta_verdict(a.aic, b.aic)
        v_bic = compare.delta_verdict(a.bic, b.bic)
        rows.append(
            [
                model,
                _fmt(a.aic),
                _fmt(b.aic),
                f"{v_aic.delta:.2f}",
                v_aic.verdict,
                _fmt(a.bic),
                _fmt(b.bic),
                f"{v_bic.delta:.2f}",
                v_bic.verdict,
            ]
        )
        print(f"compare: {model} delta_aic {v_aic.delta:.2f} -> {v_aic.verdict}")
    _write_csv(out / "delta_table.csv", header, columns, rows)
    return EXIT_OK


def cmd_summarize(args) -> int:
    inputs = _check_inputs(args.scores)
    records = _read_csv_dicts(Path(args.scores))
    if not records:
        raise ValueError(f"{args.scores}: no score rows")
    group_vars = _split(args.groups)
    if not group_vars:
        raise ConfigError("select at least one group column via --groups")
    score_cols = _split(args.score_cols) or ["theta"]
    for col in score_cols + group_vars:
        if col not in records[0]:
            raise ValueError(f"unknown column {col!r} in {args.scores}")

    weights = np.array([float(r.get("weight", 1.0) or 1.0) for r in records])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = _header_lines(args, inputs)

    plot_rows = []
    for gvar in group_vars:
        labels = np.array(
            [r[gvar] if r[gvar] != "" else "Missing data" for r in records], dtype=object
        )
        table_rows = []
        for col in score_cols:
            scores = np.array(
                [float(r[col]) if r[col] != "" else np.nan for r in records]
            )
            summaries = analytics.weighted_summary(scores, weights, labels)
            overall = analytics.overall_summary(scores, weights)
            flags = analytics.nonoverlap_flags(summaries, overall)
            for s in summaries + [overall]:
                flag = ""
                if s is not overall and flags.excludes_overall.get(s.group):
                    flag = "excludes-overall"
                if s.suppressed:
                    flag = "suppressed"
                table_rows.append(
                    [
                        gvar,
                        s.group,
                        col,
                        str(s.n_unweighted),
                        _fmt(s.n_weighted),
                        _fmt(s.mean),
                        _fmt(s.se),
                        _fmt(s.ci_low),
                        _fmt(s.ci_high),
                        flag,
                    ]
                )
                plot_rows.append(
                    [gvar, s.group, col, _fmt(s.mean), _fmt(s.ci_low), _fmt(s.ci_high)]
                )
        _write_csv(
            out / f"summary_{gvar}.csv",
            header,
            [
                "group_var",
                "group",
                "score",
                "n_unweighted",
                "n_weighted",
                "mean",
                "se",
                "ci_lo",
                "ci_hi",
                "flag",
            ],
            table_rows,
        )
    _write_csv(
        out / "plot_data.csv",
        header,
        ["group_var", "group", "score", "mean", "ci_lo", "ci_hi"],
        plot_rows,
    )
    print(f"summarize: wrote {len(group_vars)} summary tables")
    return EXIT_OK


def cmd_simulate(args) -> int:
    inputs = _check_inputs(args.spec)
    spec = load_simspec(args.spec)
    if args.seed is not None:
        from dataclasses import replace

        spec = replace(spec, seed=args.seed)
    matrix = simulate_responses(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = _header_lines(args, inputs)
    columns = ["person_id", "weight"] + list(matrix.items)
    rows = []
    for n in range(matrix.n_persons):
        row = [matrix.person_ids[n], _fmt(matrix.weights[n])]
        row += [
            str(int(matrix.codes[n, j])) if matrix.observed[n, j] else ""
            for j in range(matrix.n_items)
        ]
        rows.append(row)
    _write_csv(out / "simulated.csv", header, columns, rows)
    print(f"simulate: wrote {matrix.n_persons} persons x {matrix.n_items} items")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="input CSV")
    p.add_argument("--scheme", required=True, help="coding scheme JSON")
    p.add_argument("--items", required=True, help="comma-separated item columns")
    p.add_argument("--weight", default=None, help="weight column")
    p.add_argument("--groups", default=None, help="comma-separated group columns")
    p.add_argument("--id", default=None, help="person-id column")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polyscale",
        description="Latent-trait scaling pipeline for categorical survey data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("recode", help="apply a coding scheme and screen all-missing persons")
    _add_data_flags(p)
    p.add_argument("--require", default=None, help="items for the all-missing screen (default: all)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_recode)

    p = sub.add_parser("fit", help="fit item parameters by EM marginal maximum likelihood")
    _add_data_flags(p)
    p.add_argument("--models", required=True, help="comma-separated subset of grm,ggum,nrm")
    p.add_argument("--grid-points", type=int, default=61)
    p.add_argument("--grid-bound", type=float, default=6.0)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("score", help="MAP-score persons with a parameter file")
    _add_data_flags(p)
    p.add_argument("--params", required=True, help="parameter file from fit")
    p.add_argument("--classical", action="store_true", help="add z_score_b / z_score_w columns")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("compare", help="delta table between two fit-metrics files")
    p.add_argument("--metrics-a", required=True)
    p.add_argument("--metrics-b", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("summarize", help="survey-weighted group summaries of a scores file")
    p.add_argument("--scores", required=True, help="scores CSV from score")
    p.add_argument("--groups", required=True, help="comma-separated group columns")
    p.add_argument("--score-cols", default="theta", help="score columns to summarize")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("simulate", help="generate synthetic responses from a sim-spec file")
    p.add_argument("--spec", required=True, help="sim-spec JSON (parameter file + n/seed/missing_rate)")
    p.add_argument("--seed", type=int, default=None, help="override the spec's seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
