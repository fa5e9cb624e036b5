#!/usr/bin/env python3
"""QPSK SER sweep: PA-ISTA with tanh shrinkage against DBP + projection."""

import argparse
import sys

from paista import harness
from paista.config import default_config, load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config")
    ap.add_argument("--snr-db", type=float, nargs="+")
    ap.add_argument("--trials", type=int)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    cfg = load_config(args.config, "qpsk") if args.config else default_config("qpsk")
    if args.snr_db:
        cfg.snr_sweep = args.snr_db
    if args.trials:
        cfg.trials = args.trials
    res = harness.run_qpsk_experiment(cfg.validate())
    harness.emit(res, "csv", args.out)
    print("snr_db  ser_paista  ser_dbp")
    for p in res.aggregates["points"]:
        print(f"{p['snr_db']:6g}  {p['ser_paista']:10.4f}  {p['ser_dbp']:7.4f}")
    return 2 if res.aborted else 0


if __name__ == "__main__":
    sys.exit(main())
