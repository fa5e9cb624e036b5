"""Experiment runners and CSV/JSON emission."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__, validation
from .config import ExperimentConfig
from .core import NoiseModel, make_rng, mse, project_qpsk, ser
from .recovery import UnfoldedParams, pa_ista
from .unfolding import TrainResult, draw_sample, load_params, train

log = logging.getLogger(__name__)

CSV_COLUMNS = {
    "sparse": ["iter", "mse_trained", "mse_init", "mse_dbp"],
    "qpsk": ["snr_db", "ser_paista", "ser_dbp"],
    "validate": ["check", "measured", "threshold", "pass"],
}

# rng stream ids; training uses 1 (samples) and 2 (held-out set)
EVAL_STREAM = 3


@dataclass
class ExperimentResult:
    scenario: str
    config: dict
    config_hash: str
    records: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    training: dict | None = None
    version: str = __version__
    aborted: str | None = None

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "version": self.version,
            "config_hash": self.config_hash,
            "config": self.config,
            "aggregates": self.aggregates,
            "training": self.training,
            "records": self.records,
            "aborted": self.aborted,
        }


def _cplx(v) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(v, dtype=complex)]


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else str(x)


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))  # map keeps input order


def _training_summary(res: TrainResult) -> dict:
    return {
        "mode": res.mode,
        "loss": [float(v) for v in res.loss],
        "validation": [[it, float(v)] for it, v in res.val],
        "eta": res.params.eta.tolist(),
        "theta": res.params.theta.tolist(),
    }


def obtain_params(cfg: ExperimentConfig) -> tuple[UnfoldedParams, dict | None]:
    """Trained parameters from ``cfg.training.params`` or a fresh training run."""
    if cfg.training.params:
        params = load_params(cfg.training.params)
        if params.u != cfg.recovery.iterations:
            raise ValueError(
                f"{cfg.training.params} has {params.u} layers, config wants {cfg.recovery.iterations}")
        return params, {"source": str(cfg.training.params)}
    res = train(cfg.train_config(), cfg.context())
    return res.params, _training_summary(res)


def run_sparse_experiment(cfg: ExperimentConfig, params: UnfoldedParams | None = None,
                          training: dict | None = None) -> ExperimentResult:
    """Mean MSE per iteration for trained and initial parameters, plus the DBP level."""
    if cfg.scenario != "sparse":
        raise ValueError("run_sparse_experiment needs scenario 'sparse'")
    ctx = cfg.context()
    if params is None:
        params, training = obtain_params(cfg)
    init = cfg.init_params()
    rc_trained, rc_init = cfg.recovery_config(params), cfg.recovery_config(init)
    noise = cfg.noise()
    result = ExperimentResult("sparse", cfg.to_dict(), cfg.hash(), training=training)

    def trial(i):
        s, y = draw_sample(ctx, cfg.shrinkage, cfg.k, noise, make_rng(cfg.seed, EVAL_STREAM, i))
        rt = pa_ista(y, rc_trained, ctx, truth=s)
        ri = pa_ista(y, rc_init, ctx, truth=s)
        return {
            "trial": i,
            "seed": [cfg.seed, EVAL_STREAM, i],
            "truth": _cplx(s),
            "estimate_trained": _cplx(rt.estimate),
            "estimate_init": _cplx(ri.estimate),
            "mse_trained": [float(v) for v in rt.mse],
            "mse_init": [float(v) for v in ri.mse],
            "mse_dbp": mse(s, rt.x0),
            "error": rt.error or ri.error,
        }

    result.records = _map(trial, range(cfg.trials), cfg.workers)
    bad = [r for r in result.records if r["error"]]
    if bad:
        result.aborted = f"trial {bad[0]['trial']}: {bad[0]['error']}"
        return result
    result.aggregates = {
        "mse_trained": np.mean([r["mse_trained"] for r in result.records], axis=0).tolist(),
        "mse_init": np.mean([r["mse_init"] for r in result.records], axis=0).tolist(),
        "mse_dbp": float(np.mean([r["mse_dbp"] for r in result.records])),
        "trials": len(result.records),
    }
    return result


def run_qpsk_experiment(cfg: ExperimentConfig, params: UnfoldedParams | None = None,
                        training: dict | None = None) -> ExperimentResult:
    """SER of PA-ISTA with tanh shrinkage and of DBP + projection over an SNR sweep."""
    if cfg.scenario != "qpsk":
        raise ValueError("run_qpsk_experiment needs scenario 'qpsk'")
    ctx = cfg.context()
    if params is None:
        params, training = obtain_params(cfg)
    rc = cfg.recovery_config(params)
    result = ExperimentResult("qpsk", cfg.to_dict(), cfg.hash(), training=training)
    points = []
    for j, snr in enumerate(cfg.snr_sweep):
        noise = NoiseModel(snr)

        def trial(i):
            rng = make_rng(cfg.seed, EVAL_STREAM, j, i)
            s, y = draw_sample(ctx, cfg.shrinkage, cfg.k, noise, rng)
            rep = pa_ista(y, rc, ctx)
            det = project_qpsk(rep.estimate)
            det_dbp = project_qpsk(rep.x0)
            return {
                "snr_db": _num(snr),
                "trial": i,
                "seed": [cfg.seed, EVAL_STREAM, j, i],
                "truth": _cplx(s),
                "detected_paista": _cplx(det),
                "detected_dbp": _cplx(det_dbp),
                "errors_paista": int(round(ser(s, det) * s.size)),
                "errors_dbp": int(round(ser(s, det_dbp) * s.size)),
                "error": rep.error,
            }

        recs = _map(trial, range(cfg.trials), cfg.workers)
        result.records.extend(recs)
        symbols = cfg.trials * ctx.n
        points.append({
            "snr_db": _num(snr),
            "ser_paista": sum(r["errors_paista"] for r in recs) / symbols,
            "ser_dbp": sum(r["errors_dbp"] for r in recs) / symbols,
            "symbols": symbols,
        })
    bad = [r for r in result.records if r["error"]]
    if bad:
        result.aborted = f"snr {bad[0]['snr_db']} trial {bad[0]['trial']}: {bad[0]['error']}"
    result.aggregates = {"points": points}
    return result


def run_solver_validation(cfg: ExperimentConfig | None = None,
                          corrupt_dispersion_sign: bool = False,
                          fd_probes: int = 50) -> ExperimentResult:
    cfg = cfg or ExperimentConfig(scenario="validate")
    checks = validation.run_all(corrupt_dispersion_sign, fd_probes)
    result = ExperimentResult("validate", cfg.to_dict(), cfg.hash())
    result.records = [
        {"check": c.name, "measured": _num(c.measured), "threshold": c.threshold,
         "higher_is_better": c.higher_is_better, "pass": c.passed}
        for c in checks
    ]
    result.aggregates = {"passed": all(c.passed for c in checks)}
    return result


def csv_rows(result: ExperimentResult | dict) -> list[list]:
    d = result.to_dict() if isinstance(result, ExperimentResult) else result
    agg = d.get("aggregates") or {}
    if d["scenario"] == "sparse":
        if not agg.get("mse_trained"):
            return []
        return [[k, a, b, agg["mse_dbp"]]
                for k, (a, b) in enumerate(zip(agg["mse_trained"], agg["mse_init"]))]
    if d["scenario"] == "qpsk":
        return [[p["snr_db"], p["ser_paista"], p["ser_dbp"]] for p in agg.get("points", [])]
    return [[r["check"], r["measured"], r["threshold"], str(r["pass"]).lower()]
            for r in d.get("records", [])]


def to_csv(result) -> str:
    d = result.to_dict() if isinstance(result, ExperimentResult) else result
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS[d["scenario"]])
    for row in csv_rows(d):
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def to_json(result) -> str:
    d = result.to_dict() if isinstance(result, ExperimentResult) else result
    return json.dumps(d, indent=2, sort_keys=True) + "\n"


def emit(result, fmt: str, out_dir, stem: str | None = None) -> list[str]:
    """Write ``<stem>.csv`` (plus a ``.meta.json`` config echo) or ``<stem>.json``."""
    d = result.to_dict() if isinstance(result, ExperimentResult) else result
    stem = stem or d["scenario"]
    os.makedirs(out_dir, exist_ok=True)
    written = []
    try:
        if fmt == "csv":
            path = os.path.join(out_dir, f"{stem}.csv")
            with open(path, "w", newline="") as f:
                f.write(to_csv(d))
            meta = {k: d[k] for k in ("scenario", "version", "config_hash", "config", "aborted")}
            meta_path = os.path.join(out_dir, f"{stem}.meta.json")
            with open(meta_path, "w") as f:
                f.write(json.dumps(meta, indent=2, sort_keys=True) + "\n")
            written += [path, meta_path]
        elif fmt == "json":
            path = os.path.join(out_dir, f"{stem}.json")
            with open(path, "w") as f:
                f.write(to_json(d))
            written.append(path)
        else:
            raise ValueError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write results to {out_dir}: {exc}") from exc
    return written


def load_result(path) -> dict:
    with open(path) as f:
        return json.load(f)
