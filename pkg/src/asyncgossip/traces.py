"""Time-series output of a run, with CSV and JSON serialization.

The CSV schema is fixed:

    t,consensus_sq,loss_mean,dist_opt_sq,grad_norm_sq_mean,grad_events,comm_events

consensus_sq is the sum convention sum_i ||x_i - x_bar||^2; dist_opt_sq is
empty (NaN) for runs without a closed-form optimum. The JSON form additionally
embeds the fully resolved configuration and diagnostic series so any run can
be replayed from its own artifact.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

CSV_HEADER = "t,consensus_sq,loss_mean,dist_opt_sq,grad_norm_sq_mean,grad_events,comm_events"


@dataclass
class Trace:
    t: np.ndarray
    consensus_sq: np.ndarray
    loss_mean: np.ndarray
    dist_opt_sq: np.ndarray
    grad_norm_sq_mean: np.ndarray
    grad_events: np.ndarray
    comm_events: np.ndarray
    # Diagnostics, not part of the CSV schema.
    tracker_gap: np.ndarray | None = None      # ||x_bar - x_tilde_bar|| per sample
    phi2: np.ndarray | None = None             # Lyapunov potential per sample
    mean_param: np.ndarray | None = None       # (S, d) network average per sample
    grad_sum: np.ndarray | None = None         # (S, d) accumulated raw gradient sum
    final_x: np.ndarray | None = None
    final_x_tilde: np.ndarray | None = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("trace times must be strictly increasing")
        for c in (self.grad_events, self.comm_events):
            if np.any(np.diff(c) < 0):
                raise ValueError("event counters must be non-decreasing")

    def csv_text(self) -> str:
        rows = [CSV_HEADER]
        for k in range(len(self.t)):
            rows.append(
                f"{float(self.t[k])!r},{float(self.consensus_sq[k])!r},"
                f"{float(self.loss_mean[k])!r},{_cell(self.dist_opt_sq[k])},"
                f"{float(self.grad_norm_sq_mean[k])!r},"
                f"{int(self.grad_events[k])},{int(self.comm_events[k])}"
            )
        return "\n".join(rows) + "\n"

    def to_csv(self, path: str) -> None:
        _atomic_write(path, self.csv_text())

    def to_json_dict(self) -> dict:
        out = {
            "config": self.config,
            "samples": {
                "t": self.t.tolist(),
                "consensus_sq": self.consensus_sq.tolist(),
                "loss_mean": self.loss_mean.tolist(),
                "dist_opt_sq": _nan_to_none(self.dist_opt_sq),
                "grad_norm_sq_mean": self.grad_norm_sq_mean.tolist(),
                "grad_events": [int(v) for v in self.grad_events],
                "comm_events": [int(v) for v in self.comm_events],
            },
        }
        if self.tracker_gap is not None:
            out["samples"]["tracker_gap"] = self.tracker_gap.tolist()
        if self.phi2 is not None:
            out["samples"]["phi2"] = self.phi2.tolist()
        if self.final_x is not None:
            blob = self.final_x.tobytes()
            if self.final_x_tilde is not None:
                blob += self.final_x_tilde.tobytes()
            out["final_state_digest"] = hashlib.sha256(blob).hexdigest()
            out["final_mean"] = self.final_x.mean(axis=0).tolist()
        return out

    def to_json(self, path: str) -> None:
        _atomic_write(path, json.dumps(self.to_json_dict(), indent=2) + "\n")


def _cell(v: float) -> str:
    return "" if np.isnan(v) else repr(float(v))


def _nan_to_none(arr: np.ndarray) -> list:
    return [None if np.isnan(v) else float(v) for v in arr]


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-trace-")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
