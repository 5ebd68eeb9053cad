"""``moosenet`` command line.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, apply_overrides, load_config
from .errors import ConfigError, DataError, MooseError, NumericalError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("moosenet")


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = list(args.set or [])
    for key in ("seed", "max_epochs", "early_stop_level"):
        v = getattr(args, key, None)
        if v is not None:
            overrides.append((key, str(v)))
    return apply_overrides(cfg, overrides)


def _echo_config(cfg: RunConfig, out: Path) -> None:
    Path(str(out) + ".config.txt").write_text(cfg.to_text())


def _records(args, split=None):
    from .dataset import load_manifest, split_view

    recs = load_manifest(args.manifest, getattr(args, "ratings", None), getattr(args, "aux", None))
    if split and split != "all":
        recs = split_view(recs, split)
        if not recs:
            raise DataError(f"manifest {args.manifest} has no {split!r} split")
    return recs


def cmd_train(args) -> int:
    from .dataset import load_pairs, split_view
    from .nethead.model import init_head, save_checkpoint
    from .nethead.train import build_head_data, format_log, train

    cfg = _resolve_config(args)
    recs = _records(args)
    tr, dv = split_view(recs, "train"), split_view(recs, "dev")
    for name, part in (("train", tr), ("dev", dv)):
        if not part:
            raise DataError(f"manifest {args.manifest} has no {name!r} split")
    pairs = load_pairs(args.pairs) if args.pairs else None
    classes = tuple(sorted({p.noise_class_name for p in pairs.values()})) if pairs else ("noise",)
    train_data = build_head_data(tr, pairs, classes)
    dev_data = build_head_data(dv)
    listeners = None
    if cfg.listener_dependent:
        listeners = sorted({lid for r in tr for lid, _ in r.listener_ratings})
    head = init_head(train_data.clean.shape[1], np.random.default_rng(cfg.seed), cfg.hidden,
                     classes, listeners, cfg.listener_dim,
                     snr_bias=(cfg.snr_min + cfg.snr_max) / 2)
    best, rows = train(head, train_data, dev_data, cfg)
    out = Path(args.out)
    save_checkpoint(best, out)
    Path(str(out) + ".log.csv").write_text(format_log(rows))
    _echo_config(cfg, out)
    last = rows[-1]
    print(f"trained {last['epoch']} epochs; best dev SRCC {last['best_srcc']:.4f} "
          f"at epoch {last['best_epoch']}; checkpoint {out}")
    return EXIT_OK


def _features(head, data):
    from .nethead.model import forward

    return forward(head, data.clean, listeners=[None] * len(data.records)).hidden


def cmd_fit_plda(args) -> int:
    from .binning import assign_bins, fit_bins
    from .nethead.model import load_checkpoint
    from .nethead.train import build_head_data
    from .plda import fit_plda, save_plda

    cfg = _resolve_config(args)
    recs = [r for r in _records(args, args.split) if r.mos is not None]
    head = load_checkpoint(args.checkpoint)
    data = build_head_data(recs)
    spec = fit_bins(data.mos, cfg.n_bins, cfg.min_count)
    model = fit_plda(_features(head, data), assign_bins(spec, data.mos), spec, cfg.min_count)
    save_plda(model, args.out)
    _echo_config(cfg, Path(args.out))
    print(f"PLDA fitted on {len(recs)} utterances, {spec.n_bins} bins; model {args.out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    from .metrics import PredictionSet, write_predictions
    from .nethead.model import load_checkpoint
    from .nethead.train import build_head_data, predict

    recs = _records(args, args.split)
    head = load_checkpoint(args.checkpoint)
    data = build_head_data(recs)
    if args.plda:
        from .plda import load_plda, predict_mos_plda, predictive_variance

        model = load_plda(args.plda)
        feats = _features(head, data)
        mos = np.atleast_1d(predict_mos_plda(model, feats))
        var = np.atleast_1d(predictive_variance(model, feats))
        ids = [r.utt_id for r in recs]
        pset = PredictionSet(dict(zip(ids, map(float, mos))), "plda", dict(zip(ids, map(float, var))))
    else:
        pset = predict(head, data)
    write_predictions(args.out, pset, recs)
    print(f"wrote {len(pset.preds)} predictions to {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .metrics import evaluate, read_predictions

    pset = read_predictions(args.predictions)
    recs = _records(args)
    levels = ["utterance", "system"] if args.level == "both" else [args.level]
    reports = [evaluate(pset, recs, lv) for lv in levels]
    for rep in reports:
        print(rep.text())
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["level", "n", "mse", "srcc", "pcc", "ktau"])
            for rep in reports:
                w.writerow([rep.level, rep.n, repr(rep.mse), repr(rep.srcc), repr(rep.pcc), repr(rep.ktau)])
    return EXIT_OK


def cmd_ensemble(args) -> int:
    from .metrics import ensemble, leave_one_out_ensembles, metric_spread, read_predictions, write_predictions

    sets = [read_predictions(p) for p in args.predictions]
    write_predictions(args.out, ensemble(sets))
    print(f"ensemble of {len(sets)} members written to {args.out}")
    if args.leave_one_out:
        if not args.manifest:
            raise ConfigError("--leave-one-out needs --manifest for evaluation")
        recs = _records(args)
        loo = leave_one_out_ensembles(sets)
        for metric in ("mse", "srcc"):
            m, s = metric_spread(loo, recs, metric, args.level)
            mi, si = metric_spread(sets, recs, metric, args.level)
            print(f"{args.level} {metric}: leave-one-out {m:.4f} +- {s:.4f}; members {mi:.4f} +- {si:.4f}")
    return EXIT_OK


def cmd_augment(args) -> int:
    from .augment import load_noise_table, make_record_pair
    from .dataset import PairEntry, save_audio, write_pairs

    cfg = _resolve_config(args)
    recs = [r for r in _records(args, args.split) if r.audio_path is not None]
    if not recs:
        raise DataError(f"no records with audio_path in {args.manifest}")
    table = load_noise_table(args.noise_table)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(recs))
    entries = []
    for r, ss in zip(recs, seeds):
        pair = make_record_pair(r, table, cfg.augment, np.random.default_rng(ss))
        clean_p = out / f"{r.utt_id}.clean.wav"
        noisy_p = out / f"{r.utt_id}.noisy.wav"
        save_audio(clean_p, pair.clean)
        save_audio(noisy_p, pair.noisy)
        name = table[0].class_names[pair.noise_class]
        entries.append(PairEntry(r.utt_id, pair.snr_db, pair.noise_class, name, clean_p, noisy_p,
                                 volume_factor=pair.volume_factor, tempo_factor=pair.tempo_factor))
    pairs_path = out / "pairs.csv"
    write_pairs(pairs_path, entries)
    _echo_config(cfg, pairs_path)
    print(f"wrote {len(entries)} clean/noisy pairs to {out}")
    return EXIT_OK


def cmd_analyze_annotators(args) -> int:
    from .dataset import UtteranceRecord, load_ratings
    from .metrics import annotator_subsample_analysis

    ratings = load_ratings(args.ratings)
    systems = {}
    if args.manifest:
        systems = {r.utt_id: r.system_id for r in _records(args)}
    recs = [
        UtteranceRecord(u, systems.get(u, u), "test", 1.0, listener_ratings=rs)
        for u, rs in sorted(ratings.items())
    ]
    ks = args.k or [1, 2, 3, 4]
    rows = []
    for k in ks:
        res = annotator_subsample_analysis(recs, k, args.trials, args.seed)
        for name, (mean, std) in res.summary().items():
            rows.append((k, name, mean, std))
            print(f"k={k} {name}: {mean:.4f} +- {std:.4f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "metric", "mean", "std"])
            for k, name, mean, std in rows:
                w.writerow([k, name, repr(mean), repr(std)])
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .nethead.gradcheck import TOLERANCE, run_gradcheck

    ok, worst, per_seed = run_gradcheck(range(args.seed, args.seed + args.n_seeds))
    for s, errs in per_seed.items():
        name = max(errs, key=errs.get)
        print(f"seed {s}: worst relative error {errs[name]:.2e} ({name})")
    print(f"{'PASS' if ok else 'FAIL'}: worst {worst:.2e} (tolerance {TOLERANCE:.0e})")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_synth(args) -> int:
    from .synthetic import make_synthetic_dataset

    p = make_synthetic_dataset(args.out_dir, args.n_train, args.n_dev, args.n_test, args.dim,
                               args.n_systems, args.seed)
    print(f"manifest {p.manifest}\npairs {p.pairs}\naux {p.aux}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moosenet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override; wins over --config")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("train", help="train the prediction head")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pairs", help="pairs CSV with noisy-variant embeddings")
    p.add_argument("--ratings", help="per-listener ratings CSV")
    p.add_argument("--aux", help="aux targets CSV (stoi, mcd)")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--early-stop-level", choices=["utterance", "system"])
    with_config(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fit-plda", help="fit the PLDA backend on head features")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--out", required=True)
    with_config(p)
    p.set_defaults(func=cmd_fit_plda)

    p = sub.add_parser("predict", help="write predictions CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--plda", help="PLDA model; predicts the posterior-weighted bin centre")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test", help="train, dev, test or all")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against manifest labels")
    p.add_argument("--predictions", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--level", choices=["utterance", "system", "both"], default="system")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ensemble", help="average prediction CSVs")
    p.add_argument("predictions", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--leave-one-out", action="store_true", help="report k-1 of k ensemble spread")
    p.add_argument("--manifest")
    p.add_argument("--level", choices=["utterance", "system"], default="system")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("augment", help="write clean/noisy augmented WAV pairs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--noise-table", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--out-dir", required=True)
    with_config(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("analyze-annotators", help="k-annotator vs 4-annotator agreement")
    p.add_argument("--ratings", required=True)
    p.add_argument("--manifest", help="supplies system ids; without it each utterance is a system")
    p.add_argument("--k", type=int, action="append", choices=[1, 2, 3, 4])
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze_annotators)

    p = sub.add_parser("gradcheck", help="finite-difference check of loss gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-seeds", type=int, default=20)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="write a synthetic embedding dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-train", type=int, default=500)
    p.add_argument("--n-dev", type=int, default=100)
    p.add_argument("--n-test", type=int, default=100)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--n-systems", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"moosenet {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"moosenet {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"moosenet {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (MooseError, ValueError) as exc:
        print(f"moosenet {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
