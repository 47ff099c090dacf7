"""Command-line entry point: ``de2gnn <command> [--config FILE] [--set key=value ...]``.

Commands: prepare, attack, train, evaluate, ablate, sweep. Every primary
output is a deterministic function of the input files and the config;
timestamps only go to ``<out>/<command>.log``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .attack import AttackBudget, heuristic_attack, load_perturbed_graph, record_between
from .config import ConfigError, PipelineConfig, load_config
from .evaluate import (ReportError, per_degree_csv, run_ablation, run_sweep, sweep_csv,
                       write_report)
from .gcn import DivergenceError, save_checkpoint
from .graph import DataError, load_manifest, write_edges
from .pipeline import Pipeline

log = logging.getLogger("de2gnn")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4


def _header(config: PipelineConfig, what: str) -> str:
    return f"{what}; config_hash={config.hash}"


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2) + "\n")


def input_graph(dataset, config: PipelineConfig):
    """The graph the defender sees: clean, heuristically attacked, or loaded from file."""
    attack = config.attack
    if attack["kind"] == "none":
        return dataset.graph, None
    if attack["kind"] == "heuristic":
        seed = int(attack.get("seed", 0))
        return heuristic_attack(dataset, AttackBudget(float(attack["rate"])), seed=seed)
    return load_perturbed_graph(dataset, attack["path"])


def _load(config: PipelineConfig):
    dataset = load_manifest(config.dataset)
    graph, _ = input_graph(dataset, config)
    return dataset, graph


def cmd_prepare(config: PipelineConfig, out: Path):
    dataset, graph = _load(config)
    pipe = Pipeline(dataset, graph, config)
    v = pipe.views("full", config.seed)
    write_edges(out / "g_hetero.tsv", v.g_hetero.edges, header=_header(config, "purified graph"))
    write_edges(out / "g_homo.tsv", v.g_homo.edges, header=_header(config, "augmented graph"))
    write_edges(out / "g_knn.tsv", v.g_knn.edges, header=_header(config, f"kNN graph, k={config.k}"))
    write_edges(out / "removed_edges.tsv", v.removed,
                header=_header(config, f"removed with similarity <= t1={config.t1}"))
    write_edges(out / "added_edges.tsv", v.added.edges, scores=v.added.score,
                header=_header(config, "added: tail node, candidate, candidate score"))
    log.info("prepare: %d edges in, %d removed, %d added, kNN graph has %d edges",
             graph.num_edges, len(v.removed), len(v.added), v.g_knn.num_edges)


def cmd_attack(config: PipelineConfig, out: Path):
    dataset = load_manifest(config.dataset)
    if config.attack["kind"] == "none":
        graph = dataset.graph
        record = record_between(graph, graph, "heuristic")
    else:
        graph, record = input_graph(dataset, config)
    write_edges(out / "edges.tsv", graph.edges, header=_header(config, "perturbed graph"))
    raw = record.to_json()
    raw["config_hash"] = config.hash
    _write_json(out / "perturbation.json", raw)
    log.info("attack: %d added, %d removed, realized rate %.6f",
             len(record.added), len(record.removed), record.rate)


def cmd_train(config: PipelineConfig, out: Path):
    dataset, graph = _load(config)
    result = Pipeline(dataset, graph, config).run(config.variant, config.seed)
    save_checkpoint(out / "model.de2g", result.params)
    (out / "curve.csv").write_text(result.curve.to_csv())
    _write_json(out / "train.json", {
        "variant": config.variant,
        "seed": config.seed,
        "epochs": len(result.curve.epochs),
        "best_epoch": result.curve.best_epoch,
        "best_val_acc": result.curve.val_acc[result.curve.best_epoch],
        "parameters": {k: list(w.shape) for k, w in result.params.items()},
        "config_hash": config.hash,
        "config": config.to_dict(include_out=False),
    })
    log.info("train: %s stopped after %d epochs (best %d)", config.variant,
             len(result.curve.epochs), result.curve.best_epoch)


def cmd_evaluate(config: PipelineConfig, out: Path):
    dataset, graph = _load(config)
    report = run_ablation(dataset, graph, config.variant, config)
    write_report(report, out / "report.json")
    (out / "per_degree.csv").write_text(per_degree_csv(report))
    log.info("evaluate: %s overall %.4f tail %s", config.variant, report.overall_acc,
             report.tail_acc)


ABLATION_HEADER = "variant,overall_acc,tail_acc,std_overall,std_tail,config_hash"


def cmd_ablate(config: PipelineConfig, out: Path):
    dataset, graph = _load(config)
    pipe = Pipeline(dataset, graph, config)
    (out / "ablation").mkdir(exist_ok=True)
    lines = [ABLATION_HEADER]
    for variant in config.ablations:
        report = run_ablation(dataset, graph, variant, config, pipeline=pipe)
        write_report(report, out / "ablation" / f"{variant}.json")
        cells = [report.overall_acc, report.tail_acc, report.overall_std, report.tail_std]
        lines.append(",".join([variant] + ["" if c is None else repr(c) for c in cells]
                              + [config.hash]))
        log.info("ablate: %s tail %s", variant, report.tail_acc)
    (out / "ablation.csv").write_text("\n".join(lines) + "\n")


def cmd_sweep(config: PipelineConfig, out: Path):
    dataset, graph = _load(config)
    parameter, values = config.sweep["parameter"], config.sweep["values"]
    rows = run_sweep(dataset, graph, parameter, values, config)
    (out / "sweep.csv").write_text(sweep_csv(parameter, rows))
    _write_json(out / "sweep.json", {"config_hash": config.hash,
                                     "config": config.to_dict(include_out=False)})


COMMANDS = {
    "prepare": cmd_prepare,
    "attack": cmd_attack,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="JSON config file")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config entry (repeatable)")
    common.add_argument("--seed", type=int, help="base seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--quiet", "-q", action="store_true")
    ap = argparse.ArgumentParser(prog="de2gnn", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=fn.__name__.replace("cmd_", ""))
    return ap


def _configure_logging(out: Path, command: str, quiet: bool):
    root = logging.getLogger("de2gnn")
    root.handlers.clear()
    root.setLevel(logging.INFO)
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.WARNING if quiet else logging.INFO)
    console.setFormatter(logging.Formatter("%(message)s"))
    sidecar = logging.FileHandler(out / f"{command}.log", mode="w")
    sidecar.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root.addHandler(console)
    root.addHandler(sidecar)
    logging.captureWarnings(True)
    logging.getLogger("py.warnings").handlers[:] = [console, sidecar]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.out is not None:
        overrides.append(f"out={json.dumps(args.out)}")
    try:
        config = load_config(args.config, overrides)
        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: output directory not writable ({exc})", file=sys.stderr)
        return EXIT_CONFIG
    _configure_logging(out, args.command, args.quiet)
    _write_json(out / "config.json", {"config_hash": config.hash,
                                      "config": config.to_dict(include_out=False)})
    try:
        COMMANDS[args.command](config, out)
    except DivergenceError as exc:
        log.error("numerical divergence: %s", exc)
        return EXIT_DIVERGED
    except (DataError, ReportError, OSError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except ValueError as exc:
        # bad hyperparameters that only surface against the data (k >= n, ...)
        log.error("data error: %s", exc)
        return EXIT_DATA
    finally:
        logging.shutdown()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
