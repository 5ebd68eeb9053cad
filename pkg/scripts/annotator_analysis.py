"""How well do k annotators agree with a disjoint set of 4?

Uses a ratings CSV (utt_id, listener_id, rating) when given, otherwise a
synthetic 8-rater corpus.

    python scripts/annotator_analysis.py [--ratings ratings.csv] [--trials 100]
"""
import argparse

from moosenet.dataset import UtteranceRecord, load_ratings
from moosenet.metrics import annotator_subsample_analysis
from moosenet.synthetic import make_rated_records


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ratings")
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if args.ratings:
        recs = [UtteranceRecord(u, u, "test", 1.0, listener_ratings=rs)
                for u, rs in sorted(load_ratings(args.ratings).items())]
    else:
        recs = make_rated_records(n_utts=400, n_systems=20, seed=args.seed)
    print("k  utt MSE          utt SRCC         sys MSE          sys SRCC")
    for k in (1, 2, 3, 4):
        s = annotator_subsample_analysis(recs, k, args.trials, args.seed).summary()
        cells = [f"{s[key][0]:.3f} +- {s[key][1]:.3f}"
                 for key in ("utterance_mse", "utterance_srcc", "system_mse", "system_srcc")]
        print(f"{k}  " + "  ".join(cells))


if __name__ == "__main__":
    main()
