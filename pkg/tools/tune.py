"""Validation-accuracy grid search over t1, t2, k and p.

    python tools/tune.py data/cora/dataset.json --attack 0.25 --seeds 3

Prints one line per grid point (mean validation / test accuracy, all and
tail nodes) and the best point by mean validation accuracy. Test numbers
are printed for information only; selection never looks at them.
"""
import argparse
import itertools
import logging

import numpy as np

from de2gnn.attack import AttackBudget, heuristic_attack
from de2gnn.config import PipelineConfig
from de2gnn.evaluate import accuracy
from de2gnn.graph import load_manifest
from de2gnn.pipeline import Pipeline


def floats(text):
    return [float(v) for v in text.split(",")]


def ints(text):
    return [int(v) for v in text.split(",")]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("manifest")
    ap.add_argument("--attack", type=float, default=0.0, help="heuristic attack rate")
    ap.add_argument("--variant", default="full")
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--t1", type=floats, default=[0.0, 0.02, 0.03, 0.04, 0.05, 0.06])
    ap.add_argument("--t2", type=floats, default=[0.8])
    ap.add_argument("--k", type=ints, default=[5])
    ap.add_argument("--p", type=ints, default=[3])
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    ds = load_manifest(args.manifest)
    graph = None
    if args.attack > 0:
        graph, _ = heuristic_attack(ds, AttackBudget(args.attack), seed=0)
    test_deg = (graph or ds.graph).degrees
    tail_val = ds.val[test_deg[ds.val] <= 5]
    tail_test = ds.test[test_deg[ds.test] <= 5]

    best = None
    for t1, t2, k, p in itertools.product(args.t1, args.t2, args.k, args.p):
        cfg = PipelineConfig(dataset=args.manifest, t1=t1, t2=t2, k=k, p=p)
        pipe = Pipeline(ds, graph, cfg)
        rows = []
        for seed in range(args.seeds):
            pred = pipe.run(args.variant, seed).predictions
            rows.append([accuracy(pred, ds.labels, m) for m in (ds.val, tail_val, ds.test, tail_test)])
        val, val_tail, test, test_tail = np.mean(rows, axis=0)
        print(f"t1={t1:.2f} t2={t2:.1f} k={k:2d} p={p:2d}  val={val:.4f} val_tail={val_tail:.4f}"
              f"  test={test:.4f} test_tail={test_tail:.4f}", flush=True)
        if best is None or val > best[0]:
            best = (val, dict(t1=t1, t2=t2, k=k, p=p))
    print("best by validation:", best[1], f"val={best[0]:.4f}")


if __name__ == "__main__":
    main()
