"""Command-line interface: ``fairsel <command> ...``.

Exit codes: 0 success, 2 bad input, 3 solver failure, 4 size limit.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .coefficients import ScoringProblem
from .errors import (
    ConvergenceError,
    DecompositionIntegrityError,
    FairselError,
    NumericalIntegrityError,
    SizeError,
)
from .ingest import SchemaSpec, compas_preprocess, empirical_joint, load_csv
from .pid import PidInput, SolverConfig, pid_decompose
from .prob import JointDistribution, VariableSchema
from .reports import RunManifest, dumps, format_float, make_report
from .shapley import DEFAULT_EXACT_LIMIT, DEFAULT_PERMUTATIONS, ShapleyScores, rank_and_select, ranking, score_features
from .synth import FIXTURE_KINDS, CausalDag, CausalModel, exact_joint, forward_sample, make_fixture, random_cpts
from .validation import removal_sweep

EXIT_OK, EXIT_INPUT, EXIT_CONVERGENCE, EXIT_SIZE = 0, 2, 3, 4


class InputError(FairselError):
    """Unreadable or malformed command-line input."""


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


def _write(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _emit(doc: dict, out: str | None, csv_text: str | None = None) -> None:
    text = dumps(doc)
    if out:
        _write(out + ".json", text)
        if csv_text is not None:
            _write(out + ".csv", csv_text)
    sys.stdout.write(text)


def _solver_cfg(args) -> SolverConfig:
    return SolverConfig(objective_tol=args.objective_tol, max_iterations=args.max_iterations)


def _load_problem_joint(args, manifest: RunManifest) -> JointDistribution:
    """Joint from --joint, --model or --data/--schema, recording inputs."""
    given = [bool(args.joint), bool(args.model), bool(args.data)]
    if sum(given) != 1:
        raise InputError("give exactly one of --joint, --model or --data")
    if args.joint:
        manifest.add_input("joint", args.joint)
        return JointDistribution.from_json(_read_json(args.joint))
    if args.model:
        manifest.add_input("model", args.model)
        return exact_joint(CausalModel.from_json(_read_json(args.model)))
    if not args.schema:
        raise InputError("--data needs --schema")
    manifest.add_input("data", args.data)
    manifest.add_input("schema", args.schema)
    manifest.parameters["smoothing"] = args.smoothing
    return empirical_joint(load_csv(args.data, SchemaSpec.load(args.schema)), args.smoothing)


# --- commands -------------------------------------------------------------

def cmd_pid(args) -> int:
    manifest = RunManifest("pid")
    manifest.add_input("joint", args.input)
    dist = JointDistribution.from_json(_read_json(args.input))
    if len(dist.names) != 3:
        raise InputError(f"pid input must have three variables, got {list(dist.names)}")
    if args.target:
        target = args.target
    else:
        labels = dist.schema.with_role("label")
        target = labels[0].name if len(labels) == 1 else dist.names[0]
    sources = args.sources or [n for n in dist.names if n != target]
    if len(sources) != 2 or target in sources:
        raise InputError("pid needs one target and two distinct sources")
    cfg = _solver_cfg(args)
    manifest.parameters.update(target=target, source1=sources[0], source2=sources[1], solver=cfg.to_json())
    result = pid_decompose(PidInput.from_names(dist, target, *sources), cfg)
    body = {"variables": {"target": target, "source1": sources[0], "source2": sources[1]},
            "result": dict(result.to_json(), total=result.total),
            "q_star": result.q_star.to_json()}
    _emit(make_report("pid", manifest, body), args.out)
    return EXIT_OK


def _table_rows(prob: ScoringProblem, table) -> list[dict]:
    rows = []
    for key in sorted(table.acc):
        f = table.factors[key]
        rows.append({"key": key, "members": prob.names_of(key), "acc": table.acc[key],
                     "disc": table.disc[key], "shared": f.shared, "mi_xa": f.mi_xa,
                     "cmi_xa_y": f.cmi_xa_y})
    return rows


def _scores_csv(scores: ShapleyScores) -> str:
    cols = ["index", "feature", "phi_acc", "phi_d", "fairness"]
    if scores.std_err is not None:
        cols += ["std_err_acc", "std_err_d"]
    lines = [",".join(cols)]
    for row in scores.rows():
        lines.append(",".join(format_float(row[c]) if isinstance(row[c], float) else str(row[c]) for c in cols))
    return "\n".join(lines) + "\n"


def cmd_score(args) -> int:
    manifest = RunManifest("score")
    dist = _load_problem_joint(args, manifest)
    cfg = _solver_cfg(args)
    prob = ScoringProblem(dist, cfg)
    manifest.parameters.update(alpha=args.alpha, mode=args.mode, permutations=args.permutations,
                               seed=args.seed, exact_limit=args.exact_limit, solver=cfg.to_json())
    scores, table = score_features(prob, args.alpha, args.mode, args.permutations, args.seed,
                                   args.exact_limit)
    manifest.parameters["resolved_mode"] = scores.method
    body = {"method": scores.method, "alpha": scores.alpha,
            "protected": prob.protected, "label": prob.label,
            "features": scores.rows(),
            "ranking": [scores.features[i] for i in ranking(scores.fairness)]}
    if args.dump_table:
        if table is None:
            raise InputError("--dump-table needs exact mode")
        body["table"] = _table_rows(prob, table)
    _emit(make_report("score", manifest, body), args.out, _scores_csv(scores))
    return EXIT_OK


def _scores_from_report(doc: dict) -> ShapleyScores:
    if doc.get("report") != "score":
        raise InputError("select expects a report written by the score command")
    try:
        rows = sorted(doc["features"], key=lambda r: r["index"])
        names = tuple(r["feature"] for r in rows)
        acc = np.array([r["phi_acc"] for r in rows], dtype=float)
        disc = np.array([r["phi_d"] for r in rows], dtype=float)
        fair = np.array([r["fairness"] for r in rows], dtype=float)
        return ShapleyScores(names, acc, disc, fair, float(doc["alpha"]), doc["method"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed score report: {exc}") from exc


def cmd_select(args) -> int:
    if args.top_k is not None and args.threshold is not None:
        raise InputError("--top-k and --threshold are mutually exclusive")
    manifest = RunManifest("select")
    manifest.add_input("scores", args.scores)
    scores = _scores_from_report(_read_json(args.scores))
    manifest.parameters.update(top_k=args.top_k, threshold=args.threshold)
    selected = rank_and_select(scores, top_k=args.top_k, threshold=args.threshold)
    body = {"ranking": [scores.features[i] for i in ranking(scores.fairness)], "selected": selected}
    _emit(make_report("select", manifest, body), args.out)
    return EXIT_OK


def _coded_spec_path(csv_path: str) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".schema.json")


def cmd_synth(args) -> int:
    if bool(args.graph) == bool(args.fixture):
        raise InputError("give exactly one of --graph or --fixture")
    if args.samples < 0:
        raise InputError("--samples must be non-negative")
    manifest = RunManifest("synth")
    if args.graph:
        manifest.add_input("graph", args.graph)
        doc = _read_json(args.graph)
        try:
            dag = CausalDag(VariableSchema.from_json(doc["nodes"]), doc["edges"])
        except (KeyError, TypeError) as exc:
            raise InputError(f"graph file needs 'nodes' and 'edges': {exc}") from exc
        model = random_cpts(dag, args.seed, args.concentration)
        manifest.parameters.update(concentration=args.concentration)
    else:
        model = make_fixture(args.fixture, args.features, args.seed)
        manifest.parameters.update(fixture=args.fixture, features=args.features)
    manifest.parameters.update(seed=args.seed, samples=args.samples)
    _write(args.out, model.dumps() + "\n")
    body = {"model_path": Path(args.out).name, "nodes": list(model.dag.names),
            "edges": [list(e) for e in model.dag.edges], "samples": args.samples,
            "samples_path": None}
    if args.samples:
        sample_path = args.samples_out or str(Path(args.out).with_suffix(".csv"))
        data = forward_sample(model, args.samples, args.seed)
        data.write_csv(sample_path)
        _write(_coded_spec_path(sample_path), dumps(SchemaSpec.coded(model.dag.schema).to_json()))
        body["samples_path"] = Path(sample_path).name
    _emit(make_report("synth", manifest, body), None)
    return EXIT_OK


def cmd_sweep(args) -> int:
    manifest = RunManifest("sweep")
    dist = _load_problem_joint(args, manifest)
    report = removal_sweep(ScoringProblem(dist))
    _emit(make_report("sweep", manifest, {"sweep": report.to_json()}), args.out, report.to_csv())
    return EXIT_OK


def cmd_compas_prep(args) -> int:
    manifest = RunManifest("compas_prep")
    manifest.add_input("raw", args.raw)
    manifest.parameters["screening_filter"] = args.screening_filter
    data = compas_preprocess(args.raw, screening_filter=args.screening_filter)
    data.write_csv(args.out)
    _write(_coded_spec_path(args.out), dumps(SchemaSpec.coded(data.schema).to_json()))
    prov = dict(data.provenance)
    prov["source"] = Path(prov.get("source", "")).name
    for line in _compas_summary(prov):
        print(line, file=sys.stderr)
    _emit(make_report("compas_prep", manifest, {"output": Path(args.out).name, "provenance": prov}), None)
    return EXIT_OK


def _compas_summary(prov: dict) -> list[str]:
    lines = [f"rows read: {prov.get('rows_read')}"]
    if prov.get("already_processed"):
        return lines + ["input already encoded; re-read as codes"]
    lines += [f"excluded by race filter: {prov['race_excluded']}",
              f"excluded by screening filter: {prov['screening_excluded']}",
              f"dropped for missing/unparseable cells: {prov['missing_dropped']}"]
    for k, target in prov["target_counts"].items():
        got = prov["group_counts"][k]
        lines.append(f"{k}: {got} (target {target}, diff {got - target:+d})")
    return lines


# --- parser ---------------------------------------------------------------

def _add_solver(p) -> None:
    p.add_argument("--objective-tol", type=float, default=SolverConfig.objective_tol,
                   help="solver stopping tolerance in bits")
    p.add_argument("--max-iterations", type=int, default=SolverConfig.max_iterations)


def _add_source(p) -> None:
    p.add_argument("--joint", help="joint distribution JSON")
    p.add_argument("--model", help="causal model JSON (exact joint is used)")
    p.add_argument("--data", help="CSV dataset (needs --schema)")
    p.add_argument("--schema", help="schema spec JSON for --data")
    p.add_argument("--smoothing", type=float, default=0.0, help="additive count smoothing for --data")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairsel", description="Score, rank and select features for accuracy and fairness.",
                                     epilog="exit codes: 0 ok, 2 bad input, 3 solver failure, 4 size limit")
    parser.add_argument("--version", action="version", version=f"fairsel {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pid", help="decompose I(T; R1, R2) of a three-variable joint")
    p.add_argument("input")
    p.add_argument("--target")
    p.add_argument("--sources", nargs=2)
    p.add_argument("--out", help="also write OUT.json")
    _add_solver(p)
    p.set_defaults(func=cmd_pid)

    p = sub.add_parser("score", help="Shapley accuracy/discrimination scores per feature")
    _add_source(p)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--mode", choices=("auto", "exact", "mc"), default="auto")
    p.add_argument("--permutations", type=int, default=DEFAULT_PERMUTATIONS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exact-limit", type=int, default=DEFAULT_EXACT_LIMIT)
    p.add_argument("--dump-table", action="store_true", help="include every subset coefficient")
    p.add_argument("--out", help="write OUT.json and OUT.csv")
    _add_solver(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("select", help="rank and select features from a score report")
    p.add_argument("scores")
    p.add_argument("--top-k", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("synth", help="random or fixture causal model, optionally sampled")
    p.add_argument("--graph", help="JSON with 'nodes' and 'edges'")
    p.add_argument("--fixture", choices=FIXTURE_KINDS)
    p.add_argument("--features", type=int, default=3, help="feature count for --fixture")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--concentration", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=0)
    p.add_argument("--samples-out")
    p.add_argument("--out", required=True, help="model JSON path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep", help="Bayes-classifier error and bias with each feature removed")
    _add_source(p)
    p.add_argument("--out", help="write OUT.json and OUT.csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compas-prep", help="encode the raw ProPublica COMPAS file")
    p.add_argument("raw")
    p.add_argument("out")
    p.add_argument("--screening-filter", action="store_true",
                   help="also apply the publishers' screening-date and charge filters")
    p.set_defaults(func=cmd_compas_prep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SizeError as exc:
        code, msg = EXIT_SIZE, exc
    except (ConvergenceError, DecompositionIntegrityError, NumericalIntegrityError) as exc:
        code, msg = EXIT_CONVERGENCE, exc
        subset = getattr(exc, "subset", None)
        if subset is not None:
            msg = f"{exc} (subset key {subset})"
    except (FairselError, OSError) as exc:
        code, msg = EXIT_INPUT, exc
    print(f"fairsel {args.command}: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
