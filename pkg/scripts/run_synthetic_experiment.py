"""Seeded head runs on the synthetic dataset, a PLDA backend per run, and
9-of-10 ensembles.

    python scripts/run_synthetic_experiment.py --out-dir runs/synth --seeds 10
"""
import argparse
import logging
from pathlib import Path

import numpy as np

from moosenet.binning import assign_bins, fit_bins
from moosenet.config import RunConfig
from moosenet.dataset import load_manifest, load_pairs, split_view
from moosenet.metrics import (PredictionSet, ensemble, evaluate, leave_one_out_ensembles,
                              metric_spread, write_predictions)
from moosenet.nethead.model import forward, init_head, save_checkpoint
from moosenet.nethead.train import build_head_data, predict, train
from moosenet.plda import fit_plda, predict_mos_plda
from moosenet.synthetic import make_synthetic_dataset


def features(head, data):
    return forward(head, data.clean, listeners=[None] * len(data.records)).hidden


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="runs/synthetic")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--max-epochs", type=int, default=50)
    ap.add_argument("--level", choices=["utterance", "system"], default="system")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    out = Path(args.out_dir)
    paths = make_synthetic_dataset(out / "data", n_train=500, n_dev=100, n_test=200, seed=0)
    recs = load_manifest(paths.manifest, aux_path=paths.aux)
    pairs = load_pairs(paths.pairs)
    classes = tuple(sorted({p.noise_class_name for p in pairs.values()}))
    tr = build_head_data(split_view(recs, "train"), pairs, classes)
    dv = build_head_data(split_view(recs, "dev"))
    te = build_head_data(split_view(recs, "test"))

    head_sets, plda_sets = [], []
    for seed in range(args.seeds):
        cfg = RunConfig(seed=seed, max_epochs=args.max_epochs, early_stop_level="utterance")
        head = init_head(tr.clean.shape[1], np.random.default_rng(seed), cfg.hidden, classes)
        best, rows = train(head, tr, dv, cfg)
        save_checkpoint(best, out / f"head_{seed}.mnck")
        hp = predict(best, te, f"head{seed}")
        spec = fit_bins(tr.mos, cfg.n_bins, cfg.min_count)
        model = fit_plda(features(best, tr), assign_bins(spec, tr.mos), spec)
        pp = PredictionSet(dict(zip(hp.preds, map(float, predict_mos_plda(model, features(best, te))))),
                           f"plda{seed}")
        write_predictions(out / f"head_{seed}.csv", hp, te.records)
        write_predictions(out / f"plda_{seed}.csv", pp, te.records)
        head_sets.append(hp)
        plda_sets.append(pp)
        h = evaluate(hp, te.records, args.level)
        p = evaluate(pp, te.records, args.level)
        print(f"seed {seed}: best epoch {rows[-1]['best_epoch']}  head MSE {h.mse:.4f} SRCC {h.srcc:.4f}"
              f"  PLDA MSE {p.mse:.4f} SRCC {p.srcc:.4f}")

    for name, sets in (("head", head_sets), ("head+PLDA", plda_sets)):
        full = evaluate(ensemble(sets), te.records, args.level)
        print(f"{name} ensemble of {len(sets)}: MSE {full.mse:.4f} SRCC {full.srcc:.4f}")
        if len(sets) >= 2:
            for metric in ("mse", "srcc"):
                m, s = metric_spread(leave_one_out_ensembles(sets), te.records, metric, args.level)
                mi, si = metric_spread(sets, te.records, metric, args.level)
                print(f"  {metric}: {len(sets) - 1}-of-{len(sets)} {m:.4f} +- {s:.4f}; single {mi:.4f} +- {si:.4f}")


if __name__ == "__main__":
    main()
