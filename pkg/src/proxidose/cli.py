"""Command-line surface: simulate | discover | estimate | pipeline | benchmark.

Configuration is a single flat JSON document (``--config``); individual flags
override file values.  Commands exit 0 on success and nonzero otherwise,
printing ``error:<category>: <message>`` on stderr so failures are machine
parsable.  All randomness flows from ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import benchmark as bench
from . import bridge, discovery, estimator, scm
from .data import Dataset
from .errors import ConfigError, ProxidoseError


def _parse_bins(text: str) -> tuple[int, int, int]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ConfigError("bins must be three comma-separated integers M,N,L")
    return tuple(int(p) for p in parts)


def _parse_grid(text: str) -> tuple[float, float, int]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ConfigError("grid must be start,stop,points")
    return float(parts[0]), float(parts[1]), int(parts[2])


def _load_config(args) -> dict:
    cfg: dict = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        cfg = json.loads(path.read_text())
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
    overrides = {
        "scenario": getattr(args, "scenario", None),
        "csv": getattr(args, "csv", None),
        "n": getattr(args, "n", None),
        "seed": getattr(args, "seed", None),
        "alpha": getattr(args, "alpha", None),
        "strategy": getattr(args, "strategy", None),
        "proxy_rule": getattr(args, "proxy_rule", None),
        "outcome": getattr(args, "outcome", None),
        "z": getattr(args, "z", None),
        "w": getattr(args, "w", None),
        "lambda_h": getattr(args, "lambda_h", None),
        "lambda_q": getattr(args, "lambda_q", None),
        "h_bw": getattr(args, "h_bw", None),
        "reps": getattr(args, "reps", None),
        "truth_replicates": getattr(args, "truth_replicates", None),
        "jobs": getattr(args, "jobs", None),
        "out": getattr(args, "out", None),
    }
    if getattr(args, "treated", None):
        overrides["treated"] = [t.strip() for t in args.treated.split(",")]
    if getattr(args, "bins", None):
        m, n, l = _parse_bins(args.bins)
        overrides.update({"bins_m": m, "bins_n": n, "bins_l": l})
    if getattr(args, "grid", None):
        start, stop, points = _parse_grid(args.grid)
        overrides.update(
            {"grid_start": start, "grid_stop": stop, "grid_points": points}
        )
    if getattr(args, "q_disabled", False):
        overrides["q_disabled"] = True
    if getattr(args, "no_discovery", False):
        overrides["discovery"] = False
    for key, value in overrides.items():
        if value is not None:
            cfg[key] = value
    return cfg


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _bins(cfg: dict) -> tuple[int, int, int]:
    return (
        int(cfg.get("bins_m", 15)),
        int(cfg.get("bins_n", 8)),
        int(cfg.get("bins_l", 5)),
    )


def _dataset_from(cfg: dict) -> tuple[Dataset, scm.ScmSpec | None]:
    has_csv, has_scenario = bool(cfg.get("csv")), bool(cfg.get("scenario"))
    if has_csv == has_scenario:
        raise ConfigError("exactly one dataset source (csv or scenario) required")
    if has_csv:
        return Dataset.from_csv(cfg["csv"]), None
    spec = scm.builtin_scenario(cfg["scenario"])
    n = int(cfg.get("n", 0))
    if n < 1:
        raise ConfigError("a positive sample size n is required")
    seed = int(cfg.get("seed", 0))
    return scm.sample(spec, n, seed), spec


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    if not cfg.get("scenario"):
        raise ConfigError("simulate requires a scenario")
    dataset, spec = _dataset_from({**cfg, "csv": None})
    out = _out_dir(cfg)
    csv_path = out / "data.csv"
    dataset.to_csv(csv_path)
    sidecar = {
        "scenario": cfg["scenario"],
        "n": dataset.n,
        "seed": int(cfg.get("seed", 0)),
        "columns": [f"{n}:{r}" for n, r in zip(dataset.names, dataset.roles)],
        "model": scm.spec_to_dict(spec),
    }
    _write_json(out / "simulate.json", sidecar)
    print(f"wrote {csv_path} ({dataset.n} rows, {len(dataset.names)} columns)")
    print(f"wrote {out / 'simulate.json'}")
    return 0


def _discover(cfg: dict, dataset: Dataset) -> discovery.BipartiteGraph:
    return discovery.discover_graph(
        dataset,
        bins=_bins(cfg),
        alpha=float(cfg.get("alpha", 0.05)),
        proxy_rule=cfg.get("proxy_rule", "smallest-other"),
        strategy=cfg.get("strategy", "quantile"),
    )


def cmd_discover(args) -> int:
    cfg = _load_config(args)
    dataset, _ = _dataset_from(cfg)
    graph = _discover(cfg, dataset)
    out = _out_dir(cfg)
    (out / "graph.json").write_text(graph.to_json() + "\n")
    (out / "graph.dot").write_text(graph.to_dot())
    print(
        f"wrote {out / 'graph.json'} and {out / 'graph.dot'}: "
        f"{graph.edge_count()} edges at alpha={graph.alpha}"
    )
    for w in graph.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def _resolve_target(cfg: dict) -> tuple[tuple[str, ...], str]:
    treated = cfg.get("treated")
    outcome = cfg.get("outcome")
    if not treated or not outcome:
        raise ConfigError("estimate requires --treated and --outcome")
    treated = (treated,) if isinstance(treated, str) else tuple(treated)
    return treated, outcome


def _estimate(cfg: dict, dataset: Dataset):
    treated, outcome = _resolve_target(cfg)
    for name in treated + (outcome,):
        dataset.column(name)  # raises a config error on missing columns
    if cfg.get("z") and cfg.get("w"):
        dataset.column(cfg["z"])
        dataset.column(cfg["w"])
        assignment = discovery.ProxyAssignment(
            treated, outcome, cfg["z"], cfg["w"], "given"
        )
        graph = None
    elif cfg.get("z") or cfg.get("w"):
        raise ConfigError("explicit proxies need both z and w")
    else:
        graph = _discover(cfg, dataset)
        assignment = discovery.select_proxies(graph, treated, outcome)

    default_h, default_q = bridge.default_regularizers(treated, outcome)
    reg_h = float(cfg.get("lambda_h") or default_h)
    reg_q = float(cfg.get("lambda_q") or default_q)
    kconfig = bridge.with_lengthscales(
        bridge.KernelConfig(reg_h=reg_h, reg_q=reg_q), dataset, assignment
    )
    h = bridge.fit_outcome_bridge(dataset, assignment, kconfig)
    if cfg.get("q_disabled"):
        q = None
    else:
        propensity = bridge.estimate_propensity(dataset, treated, assignment.w)
        q = bridge.fit_treatment_bridge(dataset, assignment, kconfig, propensity)

    if cfg.get("h_bw"):
        h_bw = [float(cfg["h_bw"])] * len(treated)
    else:
        h_bw = [estimator.bandwidth_rule(dataset.column(c)) for c in treated]
    line = np.linspace(
        float(cfg.get("grid_start", 0.0)),
        float(cfg.get("grid_stop", 1.0)),
        int(cfg.get("grid_points", 10)),
    )
    grid = line if len(treated) == 1 else np.tile(line[:, None], (1, len(treated)))
    curve = estimator.effect_curve(dataset, h, q, grid, h_bw)
    summary = {
        "treated": list(treated),
        "outcome": outcome,
        "z": assignment.z,
        "w": assignment.w,
        "proxy_case": assignment.case,
        "lambda_h": reg_h,
        "lambda_q": reg_q,
        "h_bw": list(h_bw),
        "lengthscale_dose": kconfig.lengthscale_dose,
        "lengthscale_w": kconfig.lengthscale_w,
        "lengthscale_z": kconfig.lengthscale_z,
        "q_disabled": bool(cfg.get("q_disabled", False)),
        "grid": np.asarray(grid).tolist(),
        "estimates": curve.estimates.tolist(),
    }
    return curve, summary, graph


def cmd_estimate(args) -> int:
    cfg = _load_config(args)
    dataset, _ = _dataset_from(cfg)
    curve, summary, _ = _estimate(cfg, dataset)
    out = _out_dir(cfg)
    curve.to_csv(out / "curve.csv")
    curve.to_svg(out / "curve.svg")
    _write_json(out / "estimate.json", summary)
    print(
        f"wrote {out / 'curve.csv'}, {out / 'curve.svg'}, "
        f"{out / 'estimate.json'} (z={summary['z']}, w={summary['w']})"
    )
    return 0


def cmd_pipeline(args) -> int:
    cfg = _load_config(args)
    dataset, spec = _dataset_from(cfg)
    out = _out_dir(cfg)
    if spec is not None:
        dataset.to_csv(out / "data.csv")
    graph = _discover(cfg, dataset)
    (out / "graph.json").write_text(graph.to_json() + "\n")
    (out / "graph.dot").write_text(graph.to_dot())
    curve, summary, _ = _estimate(cfg, dataset)
    curve.to_csv(out / "curve.csv")
    curve.to_svg(out / "curve.svg")
    _write_json(
        out / "pipeline.json",
        {"graph": graph.to_json_dict(), "estimate": summary},
    )
    print(f"wrote pipeline outputs under {out}")
    return 0


def cmd_benchmark(args) -> int:
    cfg = _load_config(args)
    bench_cfg = {k: v for k, v in cfg.items() if k in bench.DEFAULTS}
    if "config" in cfg and "results" in cfg:
        bench_cfg = cfg  # replaying a previous report
    report = bench.run_benchmark(bench_cfg)
    out = _out_dir(cfg)
    path = out / "report.json"
    bench.write_report(report, path)
    print(f"wrote {path}")
    for target in report["results"]["targets"]:
        label = ",".join(target["treated"]) + "->" + target["outcome"]
        if "cmae_mean" in target:
            print(
                f"  {label}: cMAE {target['cmae_mean']:.4f} "
                f"+/- {target['cmae_std']:.4f}"
            )
        else:
            print(f"  {label}: all replicates failed")
    disc = report["results"].get("discovery")
    if disc:
        print(
            f"  discovery: F1 {disc['f1_mean']:.4f} +/- {disc['f1_std']:.4f}, "
            f"precision {disc['precision_mean']:.4f}, "
            f"recall {disc['recall_mean']:.4f}"
        )
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat JSON config file")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--jobs", type=int, help="worker processes for replicates")
    p.add_argument("--out", help="output directory")


def _add_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", help="built-in scenario name")
    p.add_argument("--csv", help="dataset CSV with name:role headers")
    p.add_argument("--n", type=int, help="sample size for scenario sources")


def _add_test_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bins", help="discretization bins M,N,L")
    p.add_argument("--alpha", type=float, help="significance level")
    p.add_argument("--strategy", choices=["quantile", "uniform"])
    p.add_argument(
        "--proxy-rule", dest="proxy_rule", choices=["smallest-other", "majority"]
    )


def _add_target_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--treated", help="comma-separated treated column(s)")
    p.add_argument("--outcome", help="outcome column")
    p.add_argument("--z", help="explicit treatment-inducing proxy column")
    p.add_argument("--w", help="explicit outcome-inducing proxy column")
    p.add_argument("--lambda-h", dest="lambda_h", type=float)
    p.add_argument("--lambda-q", dest="lambda_q", type=float)
    p.add_argument("--grid", help="dose grid start,stop,points")
    p.add_argument("--h-bw", dest="h_bw", type=float, help="kernel bandwidth")
    p.add_argument(
        "--q-disabled",
        dest="q_disabled",
        action="store_true",
        help="drop the treatment-bridge correction (outcome-bridge only)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proxidose",
        description=(
            "Proxy-based causal discovery and kernel doubly-robust "
            "dose-response estimation"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample a built-in scenario to CSV")
    _add_common(p)
    p.add_argument("--scenario")
    p.add_argument("--n", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("discover", help="test all edges and emit the graph")
    _add_common(p)
    _add_source(p)
    _add_test_flags(p)
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("estimate", help="fit bridges and emit an effect curve")
    _add_common(p)
    _add_source(p)
    _add_test_flags(p)
    _add_target_flags(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("pipeline", help="simulate/ingest, discover, estimate")
    _add_common(p)
    _add_source(p)
    _add_test_flags(p)
    _add_target_flags(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("benchmark", help="replicated benchmark with a report")
    _add_common(p)
    p.add_argument("--scenario")
    p.add_argument("--n", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument(
        "--truth-replicates", dest="truth_replicates", type=int,
        help="Monte Carlo replicates per ground-truth grid point",
    )
    p.add_argument(
        "--no-discovery",
        dest="no_discovery",
        action="store_true",
        help="skip the discovery benchmark",
    )
    _add_test_flags(p)
    p.set_defaults(func=cmd_benchmark)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ProxidoseError as exc:
        print(f"error:{exc.category}: {exc.message}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
