"""Degree-stratified accuracy, repeated-run reports, ablations and sweeps."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .graph import Dataset, Graph
from .pipeline import Pipeline, RunResult


class ReportError(ValueError):
    pass


def accuracy(predictions, labels, mask) -> float:
    predictions = np.asarray(predictions)
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask
    if len(idx) == 0:
        raise ValueError("empty mask")
    return float(np.mean(predictions[idx] == np.asarray(labels)[idx]))


def bucket_names(tail_bound: int) -> list:
    return [str(d) for d in range(1, tail_bound + 1)] + [f">{tail_bound}"]


def degree_bucket_accuracy(predictions, labels, test, degrees, tail_bound: int = 5) -> dict:
    """Accuracy of test nodes grouped by degree.

    Buckets are ``"1" .. str(tail_bound)`` plus ``">tail_bound"``; degree-0
    nodes are counted in bucket ``"1"``. Empty buckets get ``acc=None``.
    """
    test = np.asarray(test)
    if test.dtype == bool:
        test = np.flatnonzero(test)
    deg = np.maximum(np.asarray(degrees)[test], 1)
    correct = np.asarray(predictions)[test] == np.asarray(labels)[test]
    out = {}
    for name in bucket_names(tail_bound):
        sel = deg > tail_bound if name.startswith(">") else deg == int(name)
        count = int(sel.sum())
        out[name] = {"acc": float(correct[sel].mean()) if count else None, "count": count}
    return out


def _mean_std(values):
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


@dataclass
class EvalReport:
    overall_acc: float
    tail_acc: float | None
    per_degree: dict
    metadata: dict
    overall_std: float | None = None
    tail_std: float | None = None
    runs: list = field(default_factory=list)
    attention_homo_mean_tail: float | None = None
    attention_homo_std_tail: float | None = None

    REQUIRED = ("overall_acc", "tail_acc", "per_degree", "metadata")

    def to_json(self) -> dict:
        return {
            "overall_acc": self.overall_acc,
            "overall_std": self.overall_std,
            "tail_acc": self.tail_acc,
            "tail_std": self.tail_std,
            "per_degree": self.per_degree,
            "attention_homo_mean_tail": self.attention_homo_mean_tail,
            "attention_homo_std_tail": self.attention_homo_std_tail,
            "runs": self.runs,
            "metadata": self.metadata,
        }

    @classmethod
    def from_json(cls, raw: dict) -> EvalReport:
        if not isinstance(raw, dict):
            raise ReportError("report must be a JSON object")
        for key in cls.REQUIRED:
            if key not in raw:
                raise ReportError(f"report is missing field {key!r}")
        for name, bucket in raw["per_degree"].items():
            if not isinstance(bucket, dict) or "acc" not in bucket or "count" not in bucket:
                raise ReportError(f"per_degree[{name!r}] needs 'acc' and 'count'")
        return cls(
            overall_acc=raw["overall_acc"],
            tail_acc=raw["tail_acc"],
            per_degree=raw["per_degree"],
            metadata=raw["metadata"],
            overall_std=raw.get("overall_std"),
            tail_std=raw.get("tail_std"),
            runs=raw.get("runs", []),
            attention_homo_mean_tail=raw.get("attention_homo_mean_tail"),
            attention_homo_std_tail=raw.get("attention_homo_std_tail"),
        )

    def weighted_bucket_mean(self) -> float:
        total = sum(b["count"] for b in self.per_degree.values())
        return sum(b["acc"] * b["count"] for b in self.per_degree.values() if b["count"]) / total

    def bucket_range(self, names=None) -> float:
        """max - min of bucket accuracies (non-empty buckets among ``names``)."""
        names = names or [k for k in self.per_degree if not k.startswith(">")]
        accs = [self.per_degree[k]["acc"] for k in names if self.per_degree[k]["count"]]
        return max(accs) - min(accs)


def write_report(report: EvalReport, path):
    Path(path).write_text(json.dumps(report.to_json(), indent=2) + "\n")


def read_report(path) -> EvalReport:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ReportError(f"{path}: malformed JSON ({exc})") from None
    return EvalReport.from_json(raw)


def per_degree_csv(report: EvalReport) -> str:
    lines = ["degree,acc,count"]
    for name, b in report.per_degree.items():
        acc = "" if b["acc"] is None else repr(b["acc"])
        lines.append(f"{name},{acc},{b['count']}")
    return "\n".join(lines) + "\n"


def summarize(runs: list, dataset: Dataset, config: PipelineConfig, variant: str) -> EvalReport:
    """Fold repeated runs (ordered by seed) into one report of means and population stds."""
    runs = sorted(runs, key=lambda r: r.seed)
    bound = config.tail_bound
    test = dataset.test
    degrees = runs[0].views.degrees
    tail_test = test[degrees[test] <= bound]
    per_run, buckets, att = [], [], []
    for r in runs:
        pred = r.predictions
        overall = accuracy(pred, dataset.labels, test)
        tail = accuracy(pred, dataset.labels, tail_test) if len(tail_test) else None
        per_run.append({"seed": r.seed, "overall_acc": overall, "tail_acc": tail,
                        "epochs": len(r.curve.epochs), "best_epoch": r.curve.best_epoch,
                        "removed_edges": int(len(r.views.removed)),
                        "added_edges": int(len(r.views.added))})
        buckets.append(degree_bucket_accuracy(pred, dataset.labels, test, degrees, bound))
        if r.attention is not None and len(tail_test):
            att.append(r.attention[tail_test, 0])
    per_degree = {}
    for name, first in buckets[0].items():
        acc = None if first["count"] == 0 else float(np.mean([b[name]["acc"] for b in buckets]))
        per_degree[name] = {"acc": acc, "count": first["count"]}
    overall, overall_std = _mean_std([r["overall_acc"] for r in per_run])
    tail, tail_std = (None, None)
    if len(tail_test):
        tail, tail_std = _mean_std([r["tail_acc"] for r in per_run])
    att_mean = att_std = None
    if att:
        att_mean, att_std = _mean_std(np.concatenate(att))
    metadata = {
        "dataset": dataset.name,
        "variant": variant,
        "attack": config.attack_descriptor(),
        "seeds": [r.seed for r in runs],
        "tail_bound": bound,
        "tail_reference": config.tail_reference,
        "degree0_in_bucket_1": int(np.sum(degrees[test] == 0)),
        "num_test": int(len(test)),
        "num_test_tail": int(len(tail_test)),
        "config_hash": config.hash,
        "config": config.to_dict(include_out=False),
    }
    report = EvalReport(overall, tail, per_degree, metadata,
                        overall_std if len(runs) > 1 else None,
                        tail_std if len(runs) > 1 else None,
                        per_run, att_mean, att_std)
    assert math.isclose(report.weighted_bucket_mean(), overall, rel_tol=0, abs_tol=1e-12)
    return report


def seeds_for(config: PipelineConfig, repeats: int | None = None) -> list:
    return [config.seed + i for i in range(repeats or config.repeats)]


def run_ablation(dataset: Dataset, graph: Graph | None, variant: str, config: PipelineConfig,
                 repeats: int | None = None, pipeline: Pipeline | None = None,
                 return_runs: bool = False):
    """Run ``variant`` for seeds ``seed .. seed+repeats-1`` and summarize."""
    pipe = pipeline or Pipeline(dataset, graph, config)
    runs = [pipe.run(variant, s) for s in seeds_for(config, repeats)]
    report = summarize(runs, dataset, config, variant)
    return (report, runs) if return_runs else report


SWEEP_HEADER = "parameter,value,overall_acc,tail_acc,std_overall,std_tail"


def run_sweep(dataset: Dataset, graph: Graph | None, parameter: str, values, config: PipelineConfig,
              repeats: int | None = None):
    """One report per value of ``parameter`` (``p`` or ``k``); the seed set is shared."""
    if parameter not in ("p", "k"):
        raise ValueError("sweep parameter must be 'p' or 'k'")
    if not len(values):
        raise ValueError("no sweep values")
    rows = []
    for value in values:
        cfg = config.replace(**{parameter: int(value)})
        rows.append((value, run_ablation(dataset, graph, cfg.variant, cfg, repeats)))
    return rows


def sweep_csv(parameter: str, rows) -> str:
    def fmt(x):
        return "" if x is None else repr(x)

    lines = [SWEEP_HEADER]
    for value, rep in rows:
        lines.append(",".join([parameter, str(value), fmt(rep.overall_acc), fmt(rep.tail_acc),
                               fmt(rep.overall_std), fmt(rep.tail_std)]))
    return "\n".join(lines) + "\n"
