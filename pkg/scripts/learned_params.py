#!/usr/bin/env python3
"""Train the unfolded network and print the learned (eta, theta) per layer.

Joint and incremental schedules can be compared with --incremental.
"""

import argparse
import csv
import sys

from paista.config import default_config
from paista.unfolding import save_params, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", choices=["sparse", "qpsk"], default="sparse")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--incremental", action="store_true")
    ap.add_argument("--params-out", help="also save the trained-parameter JSON here")
    args = ap.parse_args()

    cfg = default_config(args.scenario)
    cfg.seed = args.seed
    cfg.training.incremental = args.incremental
    res = train(cfg.train_config(), cfg.context())
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["layer", "eta", "theta"])
    for k, (e, t) in enumerate(zip(res.params.eta, res.params.theta)):
        w.writerow([k, repr(float(e)), repr(float(t))])
    for it, v in res.val:
        print(f"# iter {it} validation MSE {v:.4g}", file=sys.stderr)
    if args.params_out:
        save_params(args.params_out, res.params, cfg.seed, cfg.train_config())
    return 0


if __name__ == "__main__":
    sys.exit(main())
