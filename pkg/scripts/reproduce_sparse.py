#!/usr/bin/env python3
"""Sparse-recovery MSE curves at 15 dB and 5 dB, trained once per SNR.

Writes results/sparse_<snr>dB.csv (+ .meta.json) and prints the final MSEs.
"""

import argparse
import sys

from paista import harness
from paista.config import default_config, load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="INI config (defaults otherwise)")
    ap.add_argument("--snr-db", type=float, nargs="+", default=[15.0, 5.0])
    ap.add_argument("--trials", type=int)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    for snr in args.snr_db:
        cfg = load_config(args.config, "sparse") if args.config else default_config("sparse")
        cfg.snr_db = snr
        if args.trials:
            cfg.trials = args.trials
        res = harness.run_sparse_experiment(cfg.validate())
        if res.aborted:
            print(f"{snr:g} dB aborted: {res.aborted}", file=sys.stderr)
            return 2
        harness.emit(res, "csv", args.out, stem=f"sparse_{snr:g}dB")
        agg = res.aggregates
        print(f"{snr:g} dB: final MSE trained {agg['mse_trained'][-1]:.4g}  "
              f"initial params {agg['mse_init'][-1]:.4g}  DBP {agg['mse_dbp']:.4g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
