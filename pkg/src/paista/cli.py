"""Command line entry point: ``paista {sparse,qpsk,validate,train}``."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

from . import harness
from .config import ConfigError, default_config, dump_config, load_config
from .unfolding import save_params, train

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 1, 2, 3

log = logging.getLogger("paista")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="paista", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("sparse", "sparse recovery MSE curves (trained, initial params, DBP)"),
        ("qpsk", "QPSK symbol error rate sweep (PA-ISTA vs DBP)"),
        ("validate", "solver and gradient checks"),
        ("train", "deep-unfolding training; writes params.json"),
    ]:
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="INI config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--snr-db", help="SNR in dB; comma-separated sweep for qpsk")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--format", choices=["csv", "json"])
        sp.add_argument("--params", help="trained-parameter JSON (skips training)")
        sp.add_argument("--workers", type=int)
        sp.add_argument("--print-config", action="store_true",
                        help="print the resolved config and exit")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "train":
            sp.add_argument("--scenario", choices=["sparse", "qpsk"], default="sparse")
        if name == "validate":
            sp.add_argument("--corrupt-dispersion-sign", action="store_true",
                            help="debug: flip beta2 in the soliton check (must fail)")
            sp.add_argument("--fd-probes", type=int, default=50)
    return p


def resolve_config(args):
    scenario = args.command
    if scenario == "train":
        scenario = args.scenario
    cfg = load_config(args.config, scenario) if args.config else default_config(scenario)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.trials is not None:
        cfg.trials = args.trials
    if args.out is not None:
        cfg.out = args.out
    if args.format is not None:
        cfg.format = args.format
    if args.params is not None:
        cfg.training.params = args.params
    if args.workers is not None:
        cfg.workers = args.workers
    if args.snr_db is not None:
        try:
            values = [float(v) for v in args.snr_db.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"bad --snr-db {args.snr_db!r}") from None
        if not values:
            raise ConfigError("--snr-db needs a value")
        if cfg.scenario == "qpsk" and args.command == "qpsk":
            cfg.snr_sweep = values
        else:
            cfg.snr_db = values[0]
    return cfg.validate()


def _write_training_log(path, res):
    val = dict(res.val)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["iter", "loss", "val_mse"])
        for i, loss in enumerate(res.loss, start=1):
            w.writerow([i, repr(float(loss)), repr(float(val[i])) if i in val else ""])


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.print_config:
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK

    try:
        if args.command == "validate":
            result = harness.run_solver_validation(cfg, args.corrupt_dispersion_sign, args.fd_probes)
            harness.emit(result, cfg.format, cfg.out)
            for r in result.records:
                print(f"{'PASS' if r['pass'] else 'FAIL'} {r['check']}: "
                      f"{r['measured']} (threshold {r['threshold']})")
            return EXIT_OK if result.aggregates["passed"] else EXIT_VALIDATION
        if args.command == "train":
            res = train(cfg.train_config(), cfg.context())
            os.makedirs(cfg.out, exist_ok=True)
            path = os.path.join(cfg.out, "params.json")
            save_params(path, res.params, cfg.seed, cfg.train_config())
            _write_training_log(os.path.join(cfg.out, "train_log.csv"), res)
            print(f"wrote {path}")
            return EXIT_OK
        runner = harness.run_sparse_experiment if args.command == "sparse" else harness.run_qpsk_experiment
        result = runner(cfg)
        for path in harness.emit(result, cfg.format, cfg.out):
            print(f"wrote {path}")
        if result.aborted:
            print(f"aborted: {result.aborted}", file=sys.stderr)
            return EXIT_NUMERIC
        return EXIT_OK
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
