"""Command-line experiment driver.

Subcommands: ``spectral`` (print the spectral report of a topology),
``simulate`` / ``runtime`` / ``baseline`` (run the event-driven simulator, the
threaded concurrent runtime, or the synchronous all-averaging baseline over a
seed sweep, writing one CSV + JSON trace per seed), and ``compare`` (a matrix
of {accelerated, plain} x {communication ratios} with a combined summary).

Experiment configs are flat ``key=value`` files (``#`` comments, blank lines
ignored); unknown keys are rejected. The default output directory is taken
from --out, then the config's ``out`` key, then $ASYNCGOSSIP_OUT_DIR, then the
working directory. Failures print a single line ``error:<category>:<message>``
to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .graphs import GraphError, build_topology, spectral_report
from .objectives import (
    PERTURBED,
    QUADRATIC,
    ObjectiveError,
    build_perturbed_quadratic,
    build_quadratic,
)
from .runtime import BARRIER, EXPONENTIAL_WAIT, RuntimeConfig, run_concurrent
from .simulator import (
    ExperimentConfig,
    SimulationError,
    run_simulation,
    run_sync_baseline,
)

OUT_DIR_ENV = "ASYNCGOSSIP_OUT_DIR"

# Flat config schema: key -> (parser, default). Defaults of None mean the key
# is required (or conditionally required, validated at build time).
_KEYS = {
    # topology
    "topology": (str, "ring"),             # ring | complete | star | custom
    "n": (int, None),
    "ratio": (float, 1.0),                 # communication ratio (edge rates)
    "edges": (str, ""),                    # custom: "0-1,1-2,..."
    # objective
    "objective": (str, QUADRATIC),         # quadratic | perturbed-quadratic
    "d": (int, 4),
    "mu": (float, 1.0),
    "L": (float, 1.0),
    "epsilon": (float, 0.5),
    "zeta": (float, 0.0),
    "sigma": (float, 0.0),
    "objective_seed": (int, 0),
    # run
    "horizon": (float, None),
    "gamma": (str, "auto"),
    "accelerated": (str, "false"),
    "seeds": (str, "0"),                   # comma-separated seed sweep
    "sample_period": (float, 1.0),
    "pairing": (str, "bipartite-matching"),
    "init": (str, "consensus"),
    "init_scale": (float, 1.0),
    "x0": (str, ""),                       # comma-separated floats
    "record_phi2": (str, "false"),
    # runtime-only
    "ratio_mode": (str, EXPONENTIAL_WAIT),
    "grad_duration": (float, 1e-3),
    "grad_duration_jitter": (float, 0.0),
    # compare-only
    "ratios": (str, "1,2"),
    "consensus_threshold": (float, 1e-3),
    # output
    "out": (str, ""),
    "name": (str, "run"),
}


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


def parse_config(path: str) -> dict:
    """Parse a flat key=value config file; unknown or duplicate keys fail."""
    cfg = {k: v for k, (_, v) in _KEYS.items()}
    seen = set()
    try:
        with open(path) as f:
            lines = f.readlines()
    except OSError as e:
        raise CliError("config", f"cannot read {path}: {e.strerror}")
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError("config", f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KEYS:
            raise CliError("config", f"{path}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise CliError("config", f"{path}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        parser = _KEYS[key][0]
        try:
            cfg[key] = parser(value)
        except ValueError:
            raise CliError(
                "config", f"{path}:{lineno}: bad value {value!r} for {key!r}"
            )
    for key in ("n", "horizon"):
        if cfg[key] is None:
            raise CliError("config", f"{path}: missing required key {key!r}")
    return cfg


def _parse_bool(s: str, key: str) -> bool:
    if s.lower() in ("true", "1", "yes"):
        return True
    if s.lower() in ("false", "0", "no"):
        return False
    raise CliError("config", f"key {key!r} must be true/false, got {s!r}")


def _parse_seeds(s: str) -> list[int]:
    try:
        return [int(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise CliError("config", f"bad seeds list {s!r}")


def _parse_edges(s: str) -> list[tuple[int, int]]:
    out = []
    for part in s.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            i, j = part.split("-")
            out.append((int(i), int(j)))
        except ValueError:
            raise CliError("config", f"bad edge {part!r}; expected i-j")
    return out


def build_graph(cfg: dict, ratio: float | None = None):
    kind = cfg["topology"]
    edge_list = _parse_edges(cfg["edges"]) if kind == "custom" else None
    return build_topology(
        kind, cfg["n"],
        ratio=cfg["ratio"] if ratio is None else ratio,
        edge_list=edge_list,
    )


def build_objective(cfg: dict):
    kind = cfg["objective"]
    common = dict(n=cfg["n"], d=cfg["d"], zeta=cfg["zeta"],
                  sigma=cfg["sigma"], seed=cfg["objective_seed"])
    if kind == QUADRATIC:
        return build_quadratic(mu=cfg["mu"], L=cfg["L"], **common)
    if kind == PERTURBED:
        return build_perturbed_quadratic(epsilon=cfg["epsilon"], **common)
    raise CliError("config", f"unknown objective {kind!r}")


def _experiment_kwargs(cfg: dict, seed: int, override: bool) -> dict:
    gamma = cfg["gamma"]
    if gamma != "auto":
        try:
            gamma = float(gamma)
        except ValueError:
            raise CliError("config", f"gamma must be 'auto' or a float, got {gamma!r}")
    x0 = None
    if cfg["x0"]:
        try:
            x0 = np.array([float(v) for v in cfg["x0"].split(",")])
        except ValueError:
            raise CliError("config", f"bad x0 list {cfg['x0']!r}")
    return dict(
        graph=build_graph(cfg),
        objective=build_objective(cfg),
        horizon=cfg["horizon"],
        gamma=gamma,
        accelerated=_parse_bool(cfg["accelerated"], "accelerated"),
        seed=seed,
        sample_period=cfg["sample_period"],
        pairing=cfg["pairing"],
        init=cfg["init"],
        init_scale=cfg["init_scale"],
        x0=x0,
        gamma_override=override,
        record_phi2=_parse_bool(cfg["record_phi2"], "record_phi2"),
    )


def _out_dir(args, cfg: dict) -> str:
    return (
        args.out or cfg.get("out") or os.environ.get(OUT_DIR_ENV) or os.getcwd()
    )


def _write_trace(trace, out_dir: str, name: str, seed: int) -> list[str]:
    base = os.path.join(out_dir, f"{name}-seed{seed}")
    trace.to_csv(base + ".csv")
    trace.to_json(base + ".json")
    return [base + ".csv", base + ".json"]


def _cmd_spectral(args) -> int:
    kinds = [(k, getattr(args, k)) for k in ("ring", "complete", "star")
             if getattr(args, k) is not None]
    if args.edges is not None:
        kinds.append(("custom", args.n))
    if len(kinds) != 1:
        raise CliError("usage", "pass exactly one of --ring/--complete/--star/--edges")
    kind, n = kinds[0]
    if n is None:
        raise CliError("usage", "--edges requires --n")
    edge_list = _parse_edges(args.edges) if args.edges is not None else None
    g = build_topology(kind, n, ratio=args.ratio, edge_list=edge_list)
    report = spectral_report(g)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def _run_sweep(args, engine: str) -> int:
    cfg = parse_config(args.config)
    seeds = [args.seed] if args.seed is not None else _parse_seeds(cfg["seeds"])
    out_dir = _out_dir(args, cfg)
    written = []
    for seed in seeds:
        kwargs = _experiment_kwargs(cfg, seed, args.override_gamma)
        if engine == "runtime":
            ec = RuntimeConfig(
                **kwargs,
                ratio_mode=cfg["ratio_mode"],
                ratio=cfg["ratio"],
                grad_duration=cfg["grad_duration"],
                grad_duration_jitter=cfg["grad_duration_jitter"],
            )
            trace = run_concurrent(ec)
        elif engine == "baseline":
            trace = run_sync_baseline(ExperimentConfig(**kwargs))
        else:
            trace = run_simulation(ExperimentConfig(**kwargs))
        written += _write_trace(trace, out_dir, f"{cfg['name']}-{engine}", seed)
    for path in written:
        print(path)
    return 0


def _time_to_threshold(t: np.ndarray, series: np.ndarray, threshold: float):
    hit = np.nonzero(series <= threshold)[0]
    return float(t[hit[0]]) if hit.size else None


def _cmd_compare(args) -> int:
    cfg = parse_config(args.config)
    seeds = [args.seed] if args.seed is not None else _parse_seeds(cfg["seeds"])
    ratios = [float(v) for v in cfg["ratios"].split(",") if v.strip()]
    threshold = cfg["consensus_threshold"]
    out_dir = _out_dir(args, cfg)
    rows = []
    for accelerated in (True, False):
        for ratio in ratios:
            finals_c, finals_l, hits = [], [], []
            for seed in seeds:
                kwargs = _experiment_kwargs(cfg, seed, args.override_gamma)
                kwargs["graph"] = build_graph(cfg, ratio=ratio)
                kwargs["accelerated"] = accelerated
                trace = run_simulation(ExperimentConfig(**kwargs))
                finals_c.append(trace.consensus_sq[-1])
                finals_l.append(trace.loss_mean[-1])
                hits.append(
                    _time_to_threshold(trace.t, trace.consensus_sq, threshold)
                )
            reached = [h for h in hits if h is not None]
            rows.append({
                "accelerated": accelerated,
                "ratio": ratio,
                "seeds": seeds,
                "final_consensus_sq_mean": float(np.mean(finals_c)),
                "final_loss_mean": float(np.mean(finals_l)),
                "time_to_consensus_threshold": (
                    float(np.mean(reached)) if len(reached) == len(hits) else None
                ),
                "threshold_reached_fraction": len(reached) / len(hits),
            })
    summary = {
        "config": {k: cfg[k] for k in sorted(cfg)},
        "consensus_threshold": threshold,
        "rows": rows,
    }
    path = os.path.join(out_dir, f"{cfg['name']}-compare.json")
    from .traces import _atomic_write
    _atomic_write(path, json.dumps(summary, indent=2) + "\n")
    print(path)
    return 0


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="asyncgossip",
        description="Asynchronous randomized gossip optimization experiments.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("spectral", help="print the spectral report of a topology")
    sp.add_argument("--ring", type=int, metavar="N")
    sp.add_argument("--complete", type=int, metavar="N")
    sp.add_argument("--star", type=int, metavar="N")
    sp.add_argument("--edges", type=str, metavar="LIST",
                    help="custom edge list, e.g. 0-1,1-2")
    sp.add_argument("--n", type=int, help="node count for --edges")
    sp.add_argument("--ratio", type=float, default=1.0,
                    help="communication ratio; per-edge rate is "
                         "ratio/max(deg i, deg j)")

    for name, hlp in (
        ("simulate", "run the event-driven simulator over the seed sweep"),
        ("runtime", "run the concurrent threaded runtime over the seed sweep"),
        ("baseline", "run the synchronous all-averaging baseline"),
        ("compare", "run an accelerated/plain x ratio matrix and summarize"),
    ):
        c = sub.add_parser(name, help=hlp)
        c.add_argument("--config", required=True, help="key=value config file")
        c.add_argument("--seed", type=int, help="run a single seed")
        c.add_argument("--out", help="output directory")
        c.add_argument("--override-gamma", action="store_true",
                       dest="override_gamma",
                       help="allow gamma above the proven bound")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "spectral":
            return _cmd_spectral(args)
        if args.command == "compare":
            return _cmd_compare(args)
        return _run_sweep(args, args.command)
    except CliError as e:
        print(f"error:{e.category}:{e}", file=sys.stderr)
        return 2
    except GraphError as e:
        print(f"error:graph:{e}", file=sys.stderr)
        return 2
    except ObjectiveError as e:
        print(f"error:objective:{e}", file=sys.stderr)
        return 2
    except SimulationError as e:
        print(f"error:run:{e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
