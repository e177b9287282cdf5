"""Pipeline subcommands: synth | select | union | classify | viz.

Every run writes its outputs plus a ``manifest.json`` into ``--out-dir``: tool
version, the fully resolved configuration, and sha256 digests of all input and
output files. A manifest is sufficient to re-run its stage via
``--from-manifest``. All randomness flows from explicit seeds, so identical
inputs and flags reproduce identical output bytes.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .cohort import parse_volume_table, summarize_cohort, write_volume_table
from .classify import (
    ovr_report,
    predict_proba,
    report_to_json,
    roc_csv,
    stratified_split,
    train,
    vectorize,
)
from .diffgraph import cohort_graphs
from .figures import (
    save_confusion_figure,
    save_matrix_heatmap,
    save_pass_count_chart,
    save_roc_figure,
)
from .selection import (
    ConsensusConfig,
    SolverError,
    pivotal_from_json,
    pivotal_to_json,
    results_to_json,
    select_pivotal,
    union_pivotal,
)
from .subgraph import apply_cutoff, edges_csv, export_dot, group_mean_graph
from .synth import SynthConfig, generate_cohort


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_text(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


def _write_json(path: Path, doc: dict) -> Path:
    return _write_text(path, json.dumps(doc, indent=2) + "\n")


def _prep_out(config: dict) -> Path:
    out_dir = Path(config.get("out_dir") or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def _manifest(
    out_dir: Path,
    command: str,
    config: dict,
    inputs: Sequence[Path],
    outputs: Sequence[Path],
    started: str,
) -> Path:
    doc = {
        "schema_version": 1,
        "kind": "run_manifest",
        "tool": "braingraph",
        "tool_version": __version__,
        "command": command,
        "config": config,
        "inputs": [{"path": str(p), "sha256": _sha256(p)} for p in inputs],
        "outputs": [{"path": str(p), "sha256": _sha256(p)} for p in outputs],
        "started_at": started,
        "finished_at": _now(),
    }
    return _write_json(out_dir / "manifest.json", doc)


def _load_cohort(path: str):
    with open(path, newline="") as f:
        return parse_volume_table(f)


def _load_pivotal(path: str):
    return pivotal_from_json(json.loads(Path(path).read_text()))


def _check_pivotal_space(pset, names, dataset) -> None:
    if pset.node_count != dataset.d:
        raise ValueError(
            f"mismatched node spaces: pivotal set over {pset.node_count} nodes, "
            f"cohort has {dataset.d}"
        )
    for i, name in names.items():
        if dataset.regions[i] != name:
            raise ValueError(
                f"mismatched node spaces: index {i} is {dataset.regions[i]!r} "
                f"in the cohort but {name!r} in the pivotal set"
            )


# -- config resolution ---------------------------------------------------

def _parse_setting(tokens: Sequence[str]) -> tuple[str, tuple[str, ...] | str | None]:
    if not tokens:
        raise ValueError("empty --setting")
    kind, rest = tokens[0], list(tokens[1:])
    if kind == "subtraction" and len(rest) == 2:
        return "subtraction", (rest[0], rest[1])
    if kind == "group" and len(rest) == 1:
        return "group", rest[0]
    if kind == "cohort" and not rest:
        return "cohort", None
    raise ValueError(
        f"bad --setting {' '.join(tokens)!r}: expected 'subtraction A B', "
        "'group G', or 'cohort'"
    )


def _parse_grid(text: str, cast) -> list:
    values = [cast(tok) for tok in text.split(",") if tok.strip()]
    if not values:
        raise ValueError(f"empty grid {text!r}")
    return values


def _parse_min_pass(text: str) -> tuple[int | None, float | None]:
    try:
        return int(text), None
    except ValueError:
        pass
    value = float(text)
    if not 0.0 < value < 1.0:
        raise ValueError("--min-pass must be an integer count or a fraction in (0,1)")
    return None, value


def _config_synth(args) -> dict:
    doc = json.loads(Path(args.config).read_text()) if args.config else {}
    scfg = SynthConfig.from_dict(doc)
    if args.seed is not None:
        scfg = dataclasses.replace(scfg, seed=args.seed)
    return {"synth": scfg.to_dict(), "out_dir": args.out_dir}


def _config_select(args) -> dict:
    count, ratio = _parse_min_pass(args.min_pass)
    return {
        "cohort": args.cohort,
        "setting": list(args.setting),
        "lambda_grid": _parse_grid(args.lambda_grid, float),
        "k_grid": _parse_grid(args.k_grid, int),
        "top_k": args.top_k,
        "min_pass_count": count,
        "min_pass_ratio": ratio,
        "epsilon": args.epsilon,
        "tol": args.tol,
        "max_iter": args.max_iter,
        "jobs": args.jobs,
        "out_dir": args.out_dir,
    }


def _config_union(args) -> dict:
    return {"pivotal_paths": list(args.pivotal), "out_dir": args.out_dir}


def _config_classify(args) -> dict:
    return {
        "cohort": args.cohort,
        "pivotal": args.pivotal,
        "seed": args.seed,
        "train_frac": args.train_frac,
        "l2_strength": args.l2_strength,
        "step_size": args.step_size,
        "max_steps": args.max_steps,
        "out_dir": args.out_dir,
    }


def _config_viz(args) -> dict:
    return {
        "cohort": args.cohort,
        "pivotal": args.pivotal,
        "groups": list(args.groups),
        "cutoff": args.cutoff,
        "out_dir": args.out_dir,
    }


_CONFIG_BUILDERS = {
    "synth": _config_synth,
    "select": _config_select,
    "union": _config_union,
    "classify": _config_classify,
    "viz": _config_viz,
}


def _resolve_config(args) -> dict:
    if args.from_manifest:
        doc = json.loads(Path(args.from_manifest).read_text())
        if doc.get("kind") != "run_manifest":
            raise ValueError(f"{args.from_manifest}: not a run manifest")
        if doc.get("command") != args.command:
            raise ValueError(
                f"manifest records command {doc.get('command')!r}, not {args.command!r}"
            )
        config = dict(doc["config"])
        if args.out_dir is not None:
            config["out_dir"] = args.out_dir
        return config
    return _CONFIG_BUILDERS[args.command](args)


# -- runners -------------------------------------------------------------

def _run_synth(config: dict) -> int:
    scfg = SynthConfig.from_dict(config["synth"])
    out_dir = _prep_out(config)
    started = _now()
    dataset = generate_cohort(scfg)
    csv_path = _write_text(out_dir / "cohort.csv", write_volume_table(dataset))
    _manifest(out_dir, "synth", config, [], [csv_path], started)
    print(f"wrote {csv_path} ({summarize_cohort(dataset)})")
    return 0


def _run_select(config: dict) -> int:
    if not config.get("cohort"):
        raise ValueError("cohort CSV path required")
    out_dir = _prep_out(config)
    started = _now()
    dataset = _load_cohort(config["cohort"])
    worst_k = max(config["k_grid"])
    if worst_k > dataset.d:
        raise ValueError(f"k exceeds node count ({worst_k} > {dataset.d})")
    consensus = ConsensusConfig(
        top_K=config["top_k"],
        min_pass_count=config.get("min_pass_count"),
        min_pass_ratio=config.get("min_pass_ratio"),
        lambda_grid=tuple(config["lambda_grid"]),
        k_grid=tuple(config["k_grid"]),
        epsilon=config["epsilon"],
        tol=config["tol"],
        max_iter=config["max_iter"],
    )
    scheme, groups = _parse_setting(config["setting"])
    outcome = select_pivotal(dataset, scheme, groups, consensus, config.get("jobs"))

    index_map = outcome.valid_nodes.indices
    results_path = _write_json(
        out_dir / "selection_results.json",
        results_to_json(
            outcome.results, dataset.regions, index_map, outcome.weighting.description
        ),
    )
    pivotal_path = _write_json(
        out_dir / "pivotal.json", pivotal_to_json(outcome.pivotal, dataset.regions)
    )
    chart_path = save_pass_count_chart(
        outcome.pass_counts_full,
        consensus.resolved_min_pass(),
        out_dir / "pass_counts.png",
        title=f"top-{consensus.top_K} pass counts ({outcome.weighting.description})",
    )
    _manifest(
        out_dir,
        "select",
        config,
        [Path(config["cohort"])],
        [results_path, pivotal_path, chart_path],
        started,
    )
    print(
        f"{len(outcome.pivotal.indices)} pivotal nodes of {len(outcome.valid_nodes)} "
        f"valid (pass >= {consensus.resolved_min_pass()}/{consensus.grid_size()}, "
        f"{outcome.weighting.description})"
    )
    return 0


def _run_union(config: dict) -> int:
    paths = config.get("pivotal_paths") or []
    if not paths:
        raise ValueError("at least one pivotal JSON path required")
    out_dir = _prep_out(config)
    started = _now()
    sets = []
    names: dict[int, str] = {}
    for p in paths:
        pset, pnames = _load_pivotal(p)
        for i, name in pnames.items():
            if names.setdefault(i, name) != name:
                raise ValueError(
                    f"mismatched node spaces: index {i} named {names[i]!r} and {name!r}"
                )
        sets.append(pset)
    merged = union_pivotal(sets)
    out_path = _write_json(out_dir / "pivotal_union.json", pivotal_to_json(merged, names))
    _manifest(out_dir, "union", config, [Path(p) for p in paths], [out_path], started)
    print(f"union of {len(paths)} sets: {len(merged.indices)} nodes")
    return 0


def _run_classify(config: dict) -> int:
    for key in ("cohort", "pivotal"):
        if not config.get(key):
            raise ValueError(f"{key} path required")
    out_dir = _prep_out(config)
    started = _now()
    dataset = _load_cohort(config["cohort"])
    pset, names = _load_pivotal(config["pivotal"])
    if not pset.indices:
        raise ValueError("empty pivotal set")
    _check_pivotal_space(pset, names, dataset)

    features = vectorize(cohort_graphs(dataset), pset, dataset.regions)
    train_rows, test_rows = stratified_split(
        features, config["train_frac"], config["seed"]
    )
    model = train(
        features.take(train_rows),
        l2_strength=config["l2_strength"],
        step_size=config["step_size"],
        max_steps=config["max_steps"],
    )
    probabilities = predict_proba(model, features.X[test_rows])
    report = ovr_report(
        probabilities,
        [features.labels[i] for i in test_rows],
        classes=model.classes,
        split_seed=config["seed"],
    )

    hyper = {
        "train_frac": config["train_frac"],
        "l2_strength": config["l2_strength"],
        "step_size": config["step_size"],
        "max_steps": config["max_steps"],
        "pivotal_nodes": len(pset.indices),
        "final_loss": model.final_loss,
    }
    outputs = [_write_json(out_dir / "eval_report.json", report_to_json(report, hyper))]
    for cls in list(report.classes) + ["micro"]:
        outputs.append(
            _write_text(out_dir / f"roc_{cls}.csv", roc_csv(report.curves[cls]))
        )
    outputs.append(save_roc_figure(report, out_dir / "roc_curves.png"))
    outputs.append(save_confusion_figure(report, out_dir / "confusion_matrices.png"))
    _manifest(
        out_dir,
        "classify",
        config,
        [Path(config["cohort"]), Path(config["pivotal"])],
        outputs,
        started,
    )
    per_class = ", ".join(f"{c}={report.per_class_auc[c]:.3f}" for c in report.classes)
    print(
        f"macro AUC {report.macro_auc:.3f}, micro AUC {report.micro_auc:.3f} ({per_class})"
    )
    return 0


def _run_viz(config: dict) -> int:
    for key in ("cohort", "pivotal"):
        if not config.get(key):
            raise ValueError(f"{key} path required")
    out_dir = _prep_out(config)
    started = _now()
    dataset = _load_cohort(config["cohort"])
    pset, names = _load_pivotal(config["pivotal"])
    if not pset.indices:
        raise ValueError("empty pivotal set")
    _check_pivotal_space(pset, names, dataset)
    graphs = cohort_graphs(dataset)

    def mean_matrix(token: str) -> np.ndarray:
        parts = token.split("-")
        for g in parts:
            if dataset.group_sizes.get(g, 0) == 0:
                raise ValueError(f"unknown group {g!r}")
        if len(parts) == 1:
            return group_mean_graph(graphs, parts[0])
        if len(parts) == 2:
            return group_mean_graph(graphs, parts[0]) - group_mean_graph(graphs, parts[1])
        raise ValueError(f"bad group token {token!r}: use 'G' or 'A-B'")

    outputs = []
    idx = np.array(pset.indices)
    sub_names = [dataset.regions[i] for i in pset.indices]
    for token in config["groups"]:
        matrix = mean_matrix(token)
        edges = apply_cutoff(matrix, pset, config["cutoff"], dataset.regions)
        stem = token.lower()
        outputs.append(_write_text(out_dir / f"subgraph_{stem}.dot", export_dot(edges)))
        outputs.append(_write_text(out_dir / f"edges_{stem}.csv", edges_csv(edges)))
        outputs.append(
            save_matrix_heatmap(
                matrix[np.ix_(idx, idx)],
                out_dir / f"subgraph_{stem}.png",
                sub_names,
                title=f"mean differential subgraph: {token}",
            )
        )
        print(f"{token}: {len(edges.edges)} edges at cutoff {config['cutoff']:g}")
    _manifest(
        out_dir,
        "viz",
        config,
        [Path(config["cohort"]), Path(config["pivotal"])],
        outputs,
        started,
    )
    return 0


_RUNNERS = {
    "synth": _run_synth,
    "select": _run_select,
    "union": _run_union,
    "classify": _run_classify,
    "viz": _run_viz,
}


# -- entry point ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="braingraph",
        description="Pivotal-node discovery in longitudinal region-volume cohorts.",
    )
    parser.add_argument("--version", action="version", version=f"braingraph {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp) -> None:
        sp.add_argument("--out-dir", default=None, help="output directory (default: .)")
        sp.add_argument(
            "--from-manifest",
            default=None,
            metavar="PATH",
            help="replay the resolved config of a previous run manifest",
        )

    sp = sub.add_parser("synth", help="generate a seeded synthetic cohort CSV")
    sp.add_argument("--config", default=None, help="generator parameters as JSON")
    sp.add_argument("--seed", type=int, default=None, help="override the config seed")
    common(sp)

    sp = sub.add_parser("select", help="score nodes and extract consensus pivotal nodes")
    sp.add_argument("cohort", nargs="?", help="cohort CSV")
    sp.add_argument(
        "--setting",
        nargs="+",
        default=["cohort"],
        metavar="ARG",
        help="'subtraction A B' | 'group G' | 'cohort'",
    )
    sp.add_argument("--lambda-grid", default="0.01,0.1,1,10,100", help="comma list")
    sp.add_argument("--k-grid", default="15,20,25,30,35,40,45,50,55", help="comma list")
    sp.add_argument("--top-k", type=int, default=30, help="nodes counted per grid point")
    sp.add_argument(
        "--min-pass", default="41", help="pass count, or fraction of the grid in (0,1)"
    )
    sp.add_argument("--epsilon", type=float, default=1e-10)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--max-iter", type=int, default=100)
    sp.add_argument(
        "--jobs", type=int, default=None, help="grid workers (default: all cores)"
    )
    common(sp)

    sp = sub.add_parser("union", help="union pivotal node sets")
    sp.add_argument("pivotal", nargs="*", help="pivotal JSON files")
    common(sp)

    sp = sub.add_parser("classify", help="train/evaluate on the pivotal subgraph features")
    sp.add_argument("cohort", nargs="?", help="cohort CSV")
    sp.add_argument("--pivotal", help="pivotal JSON")
    sp.add_argument("--seed", type=int, default=0, help="split seed")
    sp.add_argument("--train-frac", type=float, default=0.8)
    sp.add_argument("--l2-strength", type=float, default=1.0)
    sp.add_argument("--step-size", type=float, default=0.1)
    sp.add_argument("--max-steps", type=int, default=2000)
    common(sp)

    sp = sub.add_parser("viz", help="export pivotal subgraphs as DOT/CSV/heatmap")
    sp.add_argument("cohort", nargs="?", help="cohort CSV")
    sp.add_argument("--pivotal", help="pivotal JSON")
    sp.add_argument(
        "--groups",
        nargs="+",
        default=["AD", "CN", "MCI"],
        help="group tokens: 'G' for a group mean, 'A-B' for a mean difference",
    )
    sp.add_argument("--cutoff", type=float, default=0.001, help="min |edge weight|")
    common(sp)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _resolve_config(args)
        return _RUNNERS[args.command](config)
    except SolverError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except KeyError as e:
        print(f"error: missing key {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
