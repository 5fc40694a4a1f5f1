"""Replicated benchmark harness: discovery quality and dose-response error.

A benchmark run samples a built-in scenario repeatedly, runs the discovery
and/or estimation pipeline on every replicate, and reports per-replicate
metrics plus mean/std aggregates against Monte Carlo ground truth.  Every
replicate seed is derived deterministically from the master seed and embedded
in the report, so re-running a report's config reproduces it byte for byte.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import bridge, discovery, estimator, scm
from .errors import ConfigError, ProxidoseError
from .scm import _splitmix64

_REP_TAG = 0x52455053  # estimation replicate stream
_DISC_TAG = 0x44495343  # discovery replicate stream
_TRUTH_TAG = 0x54525554  # Monte Carlo truth stream

DEFAULT_TARGETS = [
    {"treated": ["A_3"], "outcome": "Y_1", "z": "Y_3", "w": "A_5"},
    {"treated": ["A_2"], "outcome": "Y_2", "z": "Y_3", "w": "A_5"},
    {"treated": ["A_1", "A_3"], "outcome": "Y_1", "z": "Y_3", "w": "A_5"},
    {"treated": ["A_1", "A_5"], "outcome": "Y_4", "z": "Y_2", "w": "A_3"},
]

DEFAULTS = {
    "scenario": "synthetic-main",
    "n": 600,
    "seed": 0,
    "reps": 20,
    "discovery": True,
    "discovery_reps": 10,
    "bins_m": 15,
    "bins_n": 8,
    "bins_l": 5,
    "strategy": "quantile",
    "alpha": 0.05,
    "proxy_rule": "smallest-other",
    "targets": DEFAULT_TARGETS,
    "grid_start": 0.0,
    "grid_stop": 1.0,
    "grid_points": 10,
    "truth_replicates": 10_000,
    "q_disabled": False,
    "jobs": 1,
}


def _derive_seed(master: int, tag: int, index: int) -> int:
    return _splitmix64(_splitmix64(master ^ tag) + index)


def merge_config(config: dict | None) -> dict:
    """Fill defaults; unwrap a previously written report (replay)."""
    config = dict(config or {})
    if "config" in config and "results" in config:
        config = dict(config["config"])
    unknown = set(config) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown benchmark config keys: {sorted(unknown)}")
    merged = {**DEFAULTS, **config}
    if merged.get("reps", 0) < 1:
        raise ConfigError("reps must be >= 1")
    targets = []
    for t in merged["targets"]:
        t = dict(t)
        t["treated"] = (
            [t["treated"]] if isinstance(t["treated"], str) else list(t["treated"])
        )
        targets.append(t)
    merged["targets"] = targets
    return merged


def _grid_for(config: dict, dose_dim: int) -> np.ndarray:
    line = np.linspace(
        config["grid_start"], config["grid_stop"], config["grid_points"]
    )
    if dose_dim == 1:
        return line
    return np.tile(line[:, None], (1, dose_dim))  # diagonal multi-dose path


def _estimation_rep(payload: dict) -> dict:
    """One estimation replicate; top level so worker pools can pickle it."""
    spec = scm.builtin_scenario(payload["scenario"])
    dataset = scm.sample(spec, payload["n"], payload["seed"])
    target = payload["target"]
    treated = tuple(target["treated"])
    outcome = target["outcome"]
    out: dict = {"seed": payload["seed"]}
    try:
        if target.get("z") and target.get("w"):
            assignment = discovery.ProxyAssignment(
                treated, outcome, target["z"], target["w"], "given"
            )
        else:
            graph = discovery.discover_graph(
                dataset,
                bins=tuple(payload["bins"]),
                alpha=payload["alpha"],
                proxy_rule=payload["proxy_rule"],
                strategy=payload["strategy"],
            )
            assignment = discovery.select_proxies(graph, treated, outcome)
        default_h, default_q = bridge.default_regularizers(treated, outcome)
        reg_h = target.get("lambda_h") or default_h
        reg_q = target.get("lambda_q") or default_q
        config = bridge.with_lengthscales(
            bridge.KernelConfig(reg_h=reg_h, reg_q=reg_q), dataset, assignment
        )
        h = bridge.fit_outcome_bridge(dataset, assignment, config)
        if payload["q_disabled"]:
            q = None
        else:
            propensity = bridge.estimate_propensity(
                dataset, treated, assignment.w
            )
            q = bridge.fit_treatment_bridge(dataset, assignment, config, propensity)
        h_bw = [
            estimator.bandwidth_rule(dataset.column(c)) for c in treated
        ]
        grid = np.asarray(payload["grid"])
        curve = estimator.effect_curve(dataset, h, q, grid, h_bw)
        truth = estimator.EffectCurve(
            grid=grid, estimates=np.asarray(payload["truth"])
        )
        out["cmae"] = estimator.cmae(curve, truth)
        out["estimates"] = curve.estimates.tolist()
        out["z"], out["w"] = assignment.z, assignment.w
    except ProxidoseError as exc:
        out["error"] = f"{exc.category}: {exc.message}"
    return out


def _discovery_rep(payload: dict) -> dict:
    spec = scm.builtin_scenario(payload["scenario"])
    dataset = scm.sample(spec, payload["n"], payload["seed"])
    truth = discovery.truth_graph(spec)
    graph = discovery.discover_graph(
        dataset,
        bins=tuple(payload["bins"]),
        alpha=payload["alpha"],
        proxy_rule=payload["proxy_rule"],
        strategy=payload["strategy"],
    )
    precision, recall, f1 = discovery.graph_metrics(graph, truth)
    return {
        "seed": payload["seed"],
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "edges": graph.edge_count(),
    }


def _run_tasks(fn, payloads: list[dict], jobs: int) -> list[dict]:
    if jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, payloads))
    return [fn(p) for p in payloads]


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=0))


def run_benchmark(config: dict | None = None) -> dict:
    """Run the configured benchmark and return the (JSON-ready) report."""
    cfg = merge_config(config)
    spec = scm.builtin_scenario(cfg["scenario"])
    master = int(cfg["seed"])
    bins = [cfg["bins_m"], cfg["bins_n"], cfg["bins_l"]]
    common = {
        "scenario": cfg["scenario"],
        "n": cfg["n"],
        "bins": bins,
        "alpha": cfg["alpha"],
        "proxy_rule": cfg["proxy_rule"],
        "strategy": cfg["strategy"],
        "q_disabled": cfg["q_disabled"],
    }

    results: dict = {}
    disc_seeds: list[int] = []
    if cfg["discovery"]:
        disc_seeds = [
            _derive_seed(master, _DISC_TAG, k) for k in range(cfg["discovery_reps"])
        ]
        payloads = [{**common, "seed": s} for s in disc_seeds]
        per_rep = _run_tasks(_discovery_rep, payloads, cfg["jobs"])
        summary = {"per_rep": per_rep}
        for key in ("precision", "recall", "f1"):
            mean, std = _mean_std([r[key] for r in per_rep])
            summary[f"{key}_mean"], summary[f"{key}_std"] = mean, std
        results["discovery"] = summary

    rep_seeds = [_derive_seed(master, _REP_TAG, k) for k in range(cfg["reps"])]
    target_reports = []
    for t_index, target in enumerate(cfg["targets"]):
        dose_dim = len(target["treated"])
        grid = _grid_for(cfg, dose_dim)
        truth_seed = _derive_seed(master, _TRUTH_TAG, t_index)
        truth = scm.ground_truth_curve(
            spec,
            target["outcome"],
            target["treated"],
            grid,
            replicates=cfg["truth_replicates"],
            seed=truth_seed,
        )
        payloads = [
            {
                **common,
                "seed": s,
                "target": target,
                "grid": grid.tolist(),
                "truth": truth.estimates.tolist(),
            }
            for s in rep_seeds
        ]
        per_rep = _run_tasks(_estimation_rep, payloads, cfg["jobs"])
        good = [r["cmae"] for r in per_rep if "cmae" in r]
        report = {
            "treated": target["treated"],
            "outcome": target["outcome"],
            "truth_seed": truth_seed,
            "grid": grid.tolist(),
            "truth": truth.estimates.tolist(),
            "per_rep": per_rep,
            "failures": len(per_rep) - len(good),
        }
        if good:
            report["cmae_mean"], report["cmae_std"] = _mean_std(good)
        target_reports.append(report)
    results["targets"] = target_reports

    return {
        "config": cfg,
        "seeds": {"reps": rep_seeds, "discovery": disc_seeds},
        "results": results,
    }


def write_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
