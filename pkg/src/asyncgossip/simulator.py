"""Deterministic event-driven continuous-time engine.

Gradient updates at each node and pairwise averagings on each edge spike as
independent Poisson processes (gradients at unit rate per node, edge (i, j) at
its configured rate). Events are generated by superposition sampling: one
exponential for the total rate, then a categorical draw proportional to the
per-process rates - same law, a single random stream, simple determinism.

Events are replayed through the momentum kernel with lazy mixing. Metrics are
sampled on a fixed period using a read-only mix of every worker forward to the
sample time, so the reported consensus distance reflects the continuous
trajectory rather than stale per-worker timestamps.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (
    NON_CONVEX,
    STRONGLY_CONVEX,
    MomentumParams,
    mix_coefficients,
    momentum_params,
    step_size_bound,
)
from .graphs import Graph, laplacian_pinv, spectral_report
from .metrics import consensus_distance, lyapunov_phi2
from .objectives import PERTURBED, QUADRATIC, ObjectiveEnsemble
from .traces import Trace


class SimulationError(ValueError):
    pass


class GammaBoundError(SimulationError):
    """Step size above the proven bound without an explicit override."""


class DivergedError(SimulationError):
    """A state coordinate became non-finite; reports the offending event."""


@dataclass(frozen=True)
class Event:
    t: float
    kind: str               # "grad" | "comm"
    i: int
    j: int | None = None


@dataclass
class ExperimentConfig:
    graph: Graph
    objective: ObjectiveEnsemble
    horizon: float
    gamma: float | str = "auto"     # "auto" resolves to the proven bound
    accelerated: bool = False
    seed: int = 0
    sample_period: float = 1.0
    pairing: str = "bipartite-matching"   # or "independent-poisson"
    init: str = "consensus"               # or "spread"
    init_scale: float = 1.0
    x0: np.ndarray | None = None
    gamma_override: bool = False
    record_phi2: bool = False   # per-sample Lyapunov potential (quadratic runs)

    def __post_init__(self):
        if self.horizon <= 0:
            raise SimulationError(f"horizon must be positive, got {self.horizon}")
        if self.sample_period <= 0:
            raise SimulationError("sample_period must be positive")
        if self.pairing not in ("bipartite-matching", "independent-poisson"):
            raise SimulationError(f"unknown pairing mode {self.pairing!r}")
        if self.init not in ("consensus", "spread"):
            raise SimulationError(f"unknown init mode {self.init!r}")


def regime_of(objective: ObjectiveEnsemble) -> str:
    return STRONGLY_CONVEX if objective.kind == QUADRATIC else NON_CONVEX


def resolve_gamma(cfg: ExperimentConfig, chi: float) -> float:
    bound = step_size_bound(cfg.objective.L, chi, regime_of(cfg.objective))
    if cfg.gamma == "auto":
        return bound
    gamma = float(cfg.gamma)
    if gamma < 0:
        raise SimulationError(f"gamma must be non-negative, got {gamma}")
    if gamma > bound * (1.0 + 1e-12) and not cfg.gamma_override:
        raise GammaBoundError(
            f"gamma={gamma} exceeds the proven bound {bound}; "
            "pass gamma_override to force"
        )
    return gamma


class PoissonEventStream:
    """Superposition sampler over n gradient processes and |E| edge processes."""

    def __init__(self, graph: Graph, rng: np.random.Generator, batch: int = 8192):
        self.graph = graph
        self.rng = rng
        rates = np.concatenate([np.ones(graph.n), graph.edge_rates])
        self.total_rate = float(rates.sum())
        self._cum = np.cumsum(rates) / rates.sum()
        self._batch = batch
        self._dts = np.empty(0)
        self._cats = np.empty(0, dtype=np.int64)
        self._pos = 0

    def _refill(self):
        self._dts = self.rng.exponential(1.0 / self.total_rate, size=self._batch)
        self._cats = np.searchsorted(self._cum, self.rng.random(self._batch))
        self._pos = 0

    def next(self) -> tuple[float, int]:
        """(inter-arrival gap, category index); categories 0..n-1 are gradient
        events at that node, the rest index into graph.edges."""
        if self._pos >= len(self._dts):
            self._refill()
        out = (float(self._dts[self._pos]), int(self._cats[self._pos]))
        self._pos += 1
        return out


def next_event(stream: PoissonEventStream, t_now: float = 0.0) -> Event:
    dt, cat = stream.next()
    n = stream.graph.n
    if cat < n:
        return Event(t=t_now + dt, kind="grad", i=cat)
    i, j, _ = stream.graph.edges[cat - n]
    return Event(t=t_now + dt, kind="comm", i=i, j=j)


def _initial_state(cfg: ExperimentConfig, rng: np.random.Generator) -> np.ndarray:
    n, d = cfg.graph.n, cfg.objective.d
    x0 = np.zeros(d) if cfg.x0 is None else np.asarray(cfg.x0, dtype=float)
    x = np.tile(x0, (n, 1))
    if cfg.init == "spread":
        x += cfg.init_scale * rng.standard_normal((n, d))
    return x


def _resolved_config(cfg: ExperimentConfig, gamma, params: MomentumParams,
                     chi1, chi2, engine: str) -> dict:
    return {
        "engine": engine,
        "n": cfg.graph.n,
        "edges": len(cfg.graph.edges),
        "objective": cfg.objective.descriptor(),
        "horizon": cfg.horizon,
        "gamma": gamma,
        "accelerated": cfg.accelerated,
        "seed": cfg.seed,
        "sample_period": cfg.sample_period,
        "pairing": cfg.pairing,
        "init": cfg.init,
        "init_scale": cfg.init_scale,
        "chi1": chi1,
        "chi2": chi2,
        "eta": params.eta,
        "alpha": params.alpha,
        "alpha_tilde": params.alpha_tilde,
        "chi": params.chi,
    }


class _Recorder:
    """Accumulates metric samples, including the read-only-mix snapshot."""

    def __init__(self, cfg: ExperimentConfig, eta: float,
                 phi2_ctx: dict | None = None):
        self.cfg = cfg
        self.eta = eta
        self.obj = cfg.objective
        self.x_star = (
            self.obj.global_optimum() if self.obj.kind == QUADRATIC else None
        )
        self.phi2_ctx = phi2_ctx
        self.rows = {k: [] for k in (
            "t", "consensus_sq", "loss_mean", "dist_opt_sq",
            "grad_norm_sq_mean", "grad_events", "comm_events",
            "tracker_gap", "mean_param", "grad_sum",
        )}
        if phi2_ctx is not None:
            self.rows["phi2"] = []

    def sample(self, t, x, xt, t_last, grad_events, comm_events, grad_sum):
        if self.eta > 0:
            a, b = mix_coefficients(self.eta, t - t_last)
            a = a[:, None]
            b = b[:, None]
            xm = a * x + b * xt
            xtm = b * x + a * xt
        else:
            xm, xtm = x, xt
        x_bar = xm.mean(axis=0)
        g_bar = self.obj.mean_grad(x_bar)
        r = self.rows
        r["t"].append(t)
        r["consensus_sq"].append(consensus_distance(xm))
        r["loss_mean"].append(self.obj.mean_loss(x_bar))
        r["dist_opt_sq"].append(
            float(np.sum((x_bar - self.x_star) ** 2))
            if self.x_star is not None else np.nan
        )
        r["grad_norm_sq_mean"].append(float(g_bar @ g_bar))
        r["grad_events"].append(grad_events)
        r["comm_events"].append(comm_events)
        r["tracker_gap"].append(float(np.linalg.norm(x_bar - xtm.mean(axis=0))))
        r["mean_param"].append(x_bar.copy())
        r["grad_sum"].append(grad_sum.copy())
        if self.phi2_ctx is not None:
            c = self.phi2_ctx
            r["phi2"].append(lyapunov_phi2(
                xm, xtm, self.x_star, t, c["mu"], c["gamma"],
                c["chi1"], c["lambda_pinv"],
            ))

    def trace(self, x, xt, config: dict) -> Trace:
        r = self.rows
        return Trace(
            phi2=np.array(r["phi2"]) if self.phi2_ctx is not None else None,
            t=np.array(r["t"]),
            consensus_sq=np.array(r["consensus_sq"]),
            loss_mean=np.array(r["loss_mean"]),
            dist_opt_sq=np.array(r["dist_opt_sq"]),
            grad_norm_sq_mean=np.array(r["grad_norm_sq_mean"]),
            grad_events=np.array(r["grad_events"]),
            comm_events=np.array(r["comm_events"]),
            tracker_gap=np.array(r["tracker_gap"]),
            mean_param=np.array(r["mean_param"]),
            grad_sum=np.array(r["grad_sum"]),
            final_x=x.copy(),
            final_x_tilde=xt.copy() if xt is not None else None,
            config=config,
        )


def run_simulation(cfg: ExperimentConfig) -> Trace:
    """Replay Poisson events through the momentum kernel until the horizon."""
    g = cfg.graph
    obj = cfg.objective
    if g.n != obj.n:
        raise SimulationError(
            f"graph has {g.n} nodes but objective has {obj.n} workers"
        )
    report = spectral_report(g)
    params = momentum_params(report.chi1, report.chi2, cfg.accelerated)
    gamma = resolve_gamma(cfg, params.chi)
    eta = params.eta
    alpha, alpha_tilde = params.alpha, params.alpha_tilde

    ss = np.random.SeedSequence(cfg.seed)
    event_rng, noise_rng, init_rng = (
        np.random.default_rng(s) for s in ss.spawn(3)
    )
    stream = PoissonEventStream(g, event_rng)

    n, d = g.n, obj.d
    x = _initial_state(cfg, init_rng)
    xt = x.copy()
    t_last = np.zeros(n)
    grad_sum = np.zeros(d)
    grad_events = 0
    comm_events = 0
    event_index = 0
    T = cfg.horizon

    quad = obj.kind == QUADRATIC
    mats, centers, eps, sigma = obj.mats, obj.centers, obj.epsilon, obj.sigma

    phi2_ctx = None
    if cfg.record_phi2:
        if not quad:
            raise SimulationError("phi2 recording requires a quadratic objective")
        phi2_ctx = {"mu": obj.mu, "gamma": gamma, "chi1": report.chi1,
                    "lambda_pinv": laplacian_pinv(g)}
    recorder = _Recorder(cfg, eta, phi2_ctx)
    next_sample = 0.0
    t = 0.0

    def emit_samples(upto):
        nonlocal next_sample
        while next_sample <= upto + 1e-12:
            recorder.sample(next_sample, x, xt, t_last,
                            grad_events, comm_events, grad_sum)
            next_sample += cfg.sample_period

    def mix_row(i, t_now):
        dt = t_now - t_last[i]
        if eta > 0.0 and dt > 0.0:
            decay = np.exp(-2.0 * eta * dt)
            a = 0.5 * (1.0 + decay)
            b = 0.5 * (1.0 - decay)
            xi = a * x[i] + b * xt[i]
            xt[i] = b * x[i] + a * xt[i]
            x[i] = xi
        t_last[i] = t_now

    while True:
        dt, cat = stream.next()
        t_next = t + dt
        emit_samples(min(t_next, T))
        if t_next > T:
            break
        t = t_next
        event_index += 1
        if cat < n:
            grad_events += 1
            if gamma > 0.0:
                i = cat
                mix_row(i, t)
                if quad:
                    gvec = mats[i] @ (x[i] - centers[i])
                else:
                    gvec = (x[i] - centers[i]) - eps * np.sin(x[i])
                if sigma > 0.0:
                    gvec = gvec + sigma * noise_rng.standard_normal(d)
                step = gamma * gvec
                x[i] -= step
                xt[i] -= step
                grad_sum += gvec
                if not np.isfinite(x[i]).all():
                    raise DivergedError(
                        f"non-finite state after gradient event {event_index} "
                        f"at node {i}, t={t}"
                    )
        else:
            comm_events += 1
            i, j, _ = g.edges[cat - n]
            mix_row(i, t)
            mix_row(j, t)
            m = x[i] - x[j]
            am = alpha * m
            x[i] -= am
            x[j] += am
            atm = alpha_tilde * m
            xt[i] -= atm
            xt[j] += atm
            if not (np.isfinite(x[i]).all() and np.isfinite(x[j]).all()):
                raise DivergedError(
                    f"non-finite state after communication event {event_index} "
                    f"on edge ({i},{j}), t={t}"
                )

    # Final sample exactly at the horizon if the grid missed it.
    if not recorder.rows["t"] or recorder.rows["t"][-1] < T - 1e-12:
        recorder.sample(T, x, xt, t_last, grad_events, comm_events, grad_sum)

    config = _resolved_config(cfg, gamma, params, report.chi1, report.chi2,
                              engine="simulator")
    return recorder.trace(x, xt, config)


def run_sync_baseline(cfg: ExperimentConfig) -> Trace:
    """Synchronous stand-in for exact all-worker averaging at unit time steps.

    Every worker takes one stochastic gradient at the common iterate, then the
    iterates are averaged exactly; equivalent to gradient descent on the mean
    objective with step gamma and noise variance reduced by n.
    """
    g = cfg.graph
    obj = cfg.objective
    report = spectral_report(g)
    params = momentum_params(report.chi1, report.chi2, accelerated=False)
    gamma = resolve_gamma(cfg, params.chi)

    ss = np.random.SeedSequence(cfg.seed)
    _, noise_rng, init_rng = (np.random.default_rng(s) for s in ss.spawn(3))

    n, d = g.n, obj.d
    x0 = np.zeros(d) if cfg.x0 is None else np.asarray(cfg.x0, dtype=float)
    z = x0.copy()
    grad_sum = np.zeros(d)
    recorder = _Recorder(cfg, eta=0.0)
    t_last = np.zeros(n)

    steps = int(np.floor(cfg.horizon + 1e-12))
    recorder.sample(0.0, np.tile(z, (n, 1)), np.tile(z, (n, 1)), t_last, 0, 0,
                    grad_sum)
    for k in range(1, steps + 1):
        gsum = np.zeros(d)
        for i in range(n):
            gsum += obj.local_stoch_grad(i, z, noise_rng)
        z = z - gamma * gsum / n
        grad_sum += gsum
        if not np.isfinite(z).all():
            raise DivergedError(f"non-finite iterate after step {k}")
        recorder.sample(float(k), np.tile(z, (n, 1)), np.tile(z, (n, 1)),
                        t_last, n * k, 0, grad_sum)

    config = _resolved_config(cfg, gamma, params, report.chi1, report.chi2,
                              engine="sync-baseline")
    xs = np.tile(z, (n, 1))
    return recorder.trace(xs, xs.copy(), config)
