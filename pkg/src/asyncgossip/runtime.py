"""Genuinely concurrent in-process execution: two threads per worker.

Each worker runs a compute activity (draw sample, take a stochastic gradient,
lazily mix, step) and a communicate activity (obtain a partner from the shared
matchmaker, rendezvous, mix both, pairwise-average) against shared state.
Threads stand in for machines, so clock synchronization reduces to sharing
one monotonic clock; wall-clock gaps are converted to unit time by dividing by
the running average of gradient-step durations, keeping roughly one gradient
per worker per unit of time even under heterogeneous compute.

Kernel operations on a worker's state are serialized by a per-worker lock;
a rendezvous acquires both endpoint locks in index order. One exact averaging
pass over all workers is applied at teardown.
"""

from __future__ import annotations

import sys
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .dynamics import mix_coefficients, momentum_params
from .graphs import Graph, spectral_report
from .objectives import QUADRATIC, ObjectiveEnsemble
from .simulator import (
    ExperimentConfig,
    SimulationError,
    _Recorder,
    _initial_state,
    _resolved_config,
    resolve_gamma,
)
from .traces import Trace

BARRIER = "barrier"
EXPONENTIAL_WAIT = "exponential-wait"


class RuntimeError_(SimulationError):
    pass


class RendezvousTimeout(RuntimeError_):
    """No partner became available within the deadlock-detection window."""


@dataclass
class RuntimeConfig(ExperimentConfig):
    ratio_mode: str = EXPONENTIAL_WAIT
    ratio: float = 1.0                    # target comm participations per gradient
    grad_duration: float = 1e-3           # artificial mean gradient wall time (s)
    grad_duration_jitter: float = 0.0     # uniform relative jitter in [0, 1)
    rendezvous_timeout: float = 5.0       # seconds

    def __post_init__(self):
        super().__post_init__()
        if self.ratio_mode not in (BARRIER, EXPONENTIAL_WAIT):
            raise RuntimeError_(f"unknown ratio mode {self.ratio_mode!r}")
        if self.ratio <= 0:
            raise RuntimeError_("ratio must be positive")
        if not 0.0 <= self.grad_duration_jitter < 1.0:
            raise RuntimeError_("grad_duration_jitter must be in [0, 1)")


class RunningDurationAverage:
    """Exponentially-weighted running mean of gradient-step durations."""

    def __init__(self, decay: float = 0.9, initial: float | None = None):
        self.decay = decay
        self._value = initial
        self._lock = threading.Lock()

    def update(self, duration: float) -> float:
        with self._lock:
            if self._value is None:
                self._value = float(duration)
            else:
                self._value = self.decay * self._value + (1 - self.decay) * duration
            return self._value

    @property
    def value(self) -> float:
        with self._lock:
            if self._value is None:
                raise RuntimeError_("no gradient duration observed yet")
            return self._value


def grad_duration_average(durations) -> float:
    """Running mean of a completed duration stream (decay 0.9); returns the
    final value. The streaming form is RunningDurationAverage."""
    avg = RunningDurationAverage()
    v = None
    for d in durations:
        v = avg.update(d)
    if v is None:
        raise RuntimeError_("need at least one completed gradient duration")
    return v


class UnitClock:
    """Shared monotonic clock normalized to units of one average gradient.

    Integrates wall time divided by the current duration average piecewise,
    so the unit-time reading is monotone even as the average drifts.
    """

    def __init__(self, tracker: RunningDurationAverage):
        self.tracker = tracker
        self._lock = threading.Lock()
        self._wall0 = time.monotonic()
        self._last_wall = self._wall0
        self._unit = 0.0

    def now(self) -> float:
        with self._lock:
            w = time.monotonic()
            self._unit += (w - self._last_wall) / self.tracker.value
            self._last_wall = w
            return self._unit


@dataclass
class _PairTicket:
    partner: int
    performer: int
    done: threading.Event = field(default_factory=threading.Event)


class Matchmaker:
    """Shared-seed pseudo-random pairing over the graph's edges.

    A worker enters the waiting set when it is ready to communicate; whenever
    an edge has both endpoints waiting, a pair is drawn uniformly among such
    edges with the shared random stream. Workers engaged in a pairing are not
    in the waiting set, so the active pairs always form a matching (the
    bipartite constraint).
    """

    def __init__(self, graph: Graph, seed: int):
        self.edges = [(i, j) for (i, j, _) in graph.edges]
        self.rng = np.random.default_rng(seed)
        self.cond = threading.Condition()
        self.waiting: set[int] = set()
        self.tickets: dict[int, _PairTicket] = {}
        self.stopped = False

    def next_pair(self, available) -> tuple[int, int] | None:
        """Draw the next pair among currently available workers; None if no
        edge is eligible. Deterministic given the seed and the availability
        sequence."""
        avail = set(available)
        eligible = [e for e in self.edges if e[0] in avail and e[1] in avail]
        if not eligible:
            return None
        return eligible[int(self.rng.integers(len(eligible)))]

    def _try_match(self):
        pair = self.next_pair(self.waiting)
        if pair is None:
            return
        i, j = pair
        self.waiting.discard(i)
        self.waiting.discard(j)
        ticket = _PairTicket(partner=-1, performer=min(i, j))
        ti = _PairTicket(partner=j, performer=ticket.performer, done=ticket.done)
        tj = _PairTicket(partner=i, performer=ticket.performer, done=ticket.done)
        self.tickets[i] = ti
        self.tickets[j] = tj
        self.cond.notify_all()

    def rendezvous(self, i: int, timeout: float) -> _PairTicket | None:
        deadline = time.monotonic() + timeout
        with self.cond:
            self.waiting.add(i)
            self._try_match()
            while i not in self.tickets:
                if self.stopped or time.monotonic() >= deadline:
                    self.waiting.discard(i)
                    return None
                self.cond.wait(timeout=0.01)
            return self.tickets.pop(i)

    def stop(self):
        with self.cond:
            self.stopped = True
            self.cond.notify_all()


def matchmaker_next_pair(mm: Matchmaker, available) -> tuple[int, int] | None:
    return mm.next_pair(available)


class _SharedRun:
    """All state shared between the worker threads of one concurrent run."""

    def __init__(self, cfg: RuntimeConfig, gamma: float, eta: float,
                 alpha: float, alpha_tilde: float):
        self.cfg = cfg
        self.gamma = gamma
        self.eta = eta
        self.alpha = alpha
        self.alpha_tilde = alpha_tilde
        g, obj = cfg.graph, cfg.objective
        self.n, self.d = g.n, obj.d
        ss = np.random.SeedSequence(cfg.seed)
        streams = ss.spawn(2 * self.n + 2)
        self.noise_rngs = [np.random.default_rng(s) for s in streams[: self.n]]
        self.wait_rngs = [
            np.random.default_rng(s) for s in streams[self.n: 2 * self.n]
        ]
        init_rng = np.random.default_rng(streams[2 * self.n])
        self.x = _initial_state(cfg, init_rng)
        self.xt = self.x.copy()
        self.t_last = np.zeros(self.n)
        self.state_locks = [threading.Lock() for _ in range(self.n)]
        self.matchmaker = Matchmaker(g, cfg.seed)
        self.durations = RunningDurationAverage(initial=cfg.grad_duration)
        self.clock = UnitClock(self.durations)
        self.counter_cond = threading.Condition()
        self.grads_done = [0] * self.n
        self.comms_done = [0] * self.n
        self.ledger_lock = threading.Lock()
        self.grad_sum = np.zeros(self.d)
        self.errors: list[BaseException] = []
        self.neighbors = {
            i: [j for (a, b, _) in g.edges for j in ((b,) if a == i else (a,) if b == i else ())]
            for i in range(self.n)
        }

    def mix_row(self, i: int, t_now: float):
        dt = t_now - self.t_last[i]
        if dt < 0:
            # The shared clock is monotone but reads race with lock handoff;
            # a worker can only be behind, never ahead.
            raise RuntimeError_(f"clock regression on worker {i}: dt={dt}")
        if self.eta > 0.0 and dt > 0.0:
            a, b = mix_coefficients(self.eta, dt)
            xi = a * self.x[i] + b * self.xt[i]
            self.xt[i] = b * self.x[i] + a * self.xt[i]
            self.x[i] = xi
        self.t_last[i] = t_now


def _compute_loop(run: _SharedRun, i: int):
    cfg = run.cfg
    obj = cfg.objective
    rng = run.noise_rngs[i]
    wait_rng = run.wait_rngs[i]
    try:
        while run.clock.now() < cfg.horizon and not run.errors:
            if cfg.ratio_mode == BARRIER:
                # One gradient is released per `ratio` comm participations.
                with run.counter_cond:
                    ok = run.counter_cond.wait_for(
                        lambda: run.comms_done[i] >= cfg.ratio * run.grads_done[i]
                        or run.clock.now() >= cfg.horizon or bool(run.errors),
                        timeout=cfg.rendezvous_timeout,
                    )
                if run.clock.now() >= cfg.horizon or run.errors:
                    break
                if not ok:
                    raise RendezvousTimeout(
                        f"worker {i} compute barrier starved"
                    )
            t0 = time.monotonic()
            if cfg.grad_duration > 0:
                jit = cfg.grad_duration_jitter
                scale = 1.0 + (jit * (2 * wait_rng.random() - 1) if jit else 0.0)
                time.sleep(cfg.grad_duration * scale)
            with run.state_locks[i]:
                g = obj.local_stoch_grad(i, run.x[i], rng)
                t = run.clock.now()
                run.mix_row(i, t)
                step = run.gamma * g
                run.x[i] -= step
                run.xt[i] -= step
            run.durations.update(time.monotonic() - t0)
            with run.ledger_lock:
                run.grad_sum += g
            with run.counter_cond:
                run.grads_done[i] += 1
                run.counter_cond.notify_all()
    except BaseException as e:  # surface thread failures to the caller
        run.errors.append(e)
        run.matchmaker.stop()
        with run.counter_cond:
            run.counter_cond.notify_all()


def _comm_loop(run: _SharedRun, i: int):
    cfg = run.cfg
    wait_rng = run.wait_rngs[i]
    mm = run.matchmaker
    # Exponential-wait mode: attempts follow a rate-`ratio` Poisson schedule in
    # unit time. The schedule is anchored (due accumulates the exponential
    # gaps) so time spent blocked on a partner is recovered by catching up,
    # keeping the realized participation rate at the target.
    due = 0.0
    try:
        while run.clock.now() < cfg.horizon and not run.errors:
            if cfg.ratio_mode == EXPONENTIAL_WAIT:
                due += float(wait_rng.exponential(1.0 / cfg.ratio))
                gap = due - run.clock.now()
                if gap > 0:
                    time.sleep(gap * run.durations.value)
            else:
                with run.counter_cond:
                    ok = run.counter_cond.wait_for(
                        lambda: run.comms_done[i]
                        < cfg.ratio * (run.grads_done[i] + 1)
                        or run.clock.now() >= cfg.horizon or bool(run.errors),
                        timeout=cfg.rendezvous_timeout,
                    )
                if not ok:
                    raise RendezvousTimeout(f"worker {i} comm barrier starved")
            if run.clock.now() >= cfg.horizon or run.errors:
                break
            ticket = mm.rendezvous(i, timeout=min(1.0, cfg.rendezvous_timeout))
            if ticket is None:
                continue
            j = ticket.partner
            if ticket.performer == i:
                a, b = (i, j) if i < j else (j, i)
                with run.state_locks[a], run.state_locks[b]:
                    t = run.clock.now()
                    run.mix_row(i, t)
                    run.mix_row(j, t)
                    m = run.x[i] - run.x[j]
                    run.x[i] -= run.alpha * m
                    run.x[j] += run.alpha * m
                    run.xt[i] -= run.alpha_tilde * m
                    run.xt[j] += run.alpha_tilde * m
                ticket.done.set()
            else:
                if not ticket.done.wait(timeout=cfg.rendezvous_timeout):
                    raise RendezvousTimeout(
                        f"worker {i} partner {j} never completed the exchange"
                    )
            with run.counter_cond:
                run.comms_done[i] += 1
                run.counter_cond.notify_all()
    except BaseException as e:
        run.errors.append(e)
        run.matchmaker.stop()
        with run.counter_cond:
            run.counter_cond.notify_all()


def run_concurrent(cfg: RuntimeConfig) -> Trace:
    """Execute the algorithm with real per-worker threads; returns the same
    trace schema as the simulator, plus per-worker timing counters."""
    g, obj = cfg.graph, cfg.objective
    if g.n != obj.n:
        raise RuntimeError_(
            f"graph has {g.n} nodes but objective has {obj.n} workers"
        )
    report = spectral_report(g)
    params = momentum_params(report.chi1, report.chi2, cfg.accelerated)
    gamma = resolve_gamma(cfg, params.chi)
    run = _SharedRun(cfg, gamma, params.eta, params.alpha, params.alpha_tilde)
    recorder = _Recorder(cfg, params.eta)

    threads = [
        threading.Thread(target=_compute_loop, args=(run, i), daemon=True)
        for i in range(g.n)
    ] + [
        threading.Thread(target=_comm_loop, args=(run, i), daemon=True)
        for i in range(g.n)
    ]

    def snapshot(t):
        x = np.empty_like(run.x)
        xt = np.empty_like(run.xt)
        tl = np.empty(g.n)
        for i in range(g.n):
            with run.state_locks[i]:
                x[i] = run.x[i]
                xt[i] = run.xt[i]
                tl[i] = run.t_last[i]
        with run.ledger_lock:
            gs = run.grad_sum.copy()
        with run.counter_cond:
            ge = sum(run.grads_done)
            # Each pairwise exchange is one event shared by two workers.
            ce = sum(run.comms_done) // 2
        recorder.sample(t, x, xt, np.minimum(tl, t), ge, ce, gs)

    # Thread wake-up latency must stay well below the unit of time (one mean
    # gradient duration) or the realized communication rate drifts low; the
    # interpreter's default switch interval (5 ms) is too coarse for that.
    switch_interval = sys.getswitchinterval()
    sys.setswitchinterval(min(switch_interval, cfg.grad_duration / 10))
    for th in threads:
        th.start()
    sample_wall = cfg.sample_period * cfg.grad_duration
    snapshot(0.0)
    next_t = cfg.sample_period
    while True:
        t = run.clock.now()
        if t >= cfg.horizon or run.errors:
            break
        if t >= next_t:
            snapshot(t)
            next_t = (np.floor(t / cfg.sample_period) + 1) * cfg.sample_period
        time.sleep(max(sample_wall / 4, 1e-4))
    run.matchmaker.stop()
    for th in threads:
        th.join(timeout=cfg.rendezvous_timeout + 2.0)
    sys.setswitchinterval(switch_interval)
    if run.errors:
        raise run.errors[0]

    # Teardown: mix everyone to a common time, then one exact averaging pass.
    t_end = max(run.clock.now(), float(run.t_last.max()))
    for i in range(g.n):
        run.mix_row(i, t_end)
    snapshot(t_end)
    run.x[:] = run.x.mean(axis=0)
    run.xt[:] = run.xt.mean(axis=0)

    config = _resolved_config(cfg, gamma, params, report.chi1, report.chi2,
                              engine="concurrent-runtime")
    config["ratio_mode"] = cfg.ratio_mode
    config["ratio"] = cfg.ratio
    config["grad_duration"] = cfg.grad_duration
    config["timing"] = {
        "grads_per_worker": list(run.grads_done),
        "comms_per_worker": list(run.comms_done),
        "mean_grad_duration": run.durations.value,
    }
    return recorder.trace(run.x, run.xt, config)
