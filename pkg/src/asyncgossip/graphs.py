"""Communication topologies and the spectral constants that parameterize gossip.

A graph is a node set plus rate-weighted edges: each edge (i, j) carries the
expected number of pairwise-averaging events per unit time on that edge. From
the rate-weighted Laplacian we derive the two mixing constants used everywhere
else: chi1 (inverse algebraic connectivity) and chi2 (half the maximal
edge-wise effective resistance).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

# An eigenvalue is treated as zero when below this fraction of the largest one;
# a second "zero" eigenvalue means the graph is disconnected.
ZERO_EIG_REL_TOL = 1e-10

TOPOLOGY_KINDS = ("ring", "complete", "star", "custom")


class GraphError(ValueError):
    """Invalid topology or topology parameters."""


class DisconnectedGraphError(GraphError):
    """The graph is not connected, so chi1 is infinite."""


@dataclass(frozen=True)
class Graph:
    """Rate-weighted undirected graph: edges are (i, j, rate) with i < j."""

    n: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if self.n < 2:
            raise GraphError(f"need at least 2 nodes, got n={self.n}")
        seen = set()
        for (i, j, lam) in self.edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge ({i},{j}) out of range for n={self.n}")
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if i > j:
                raise GraphError(f"edge ({i},{j}) not in canonical i<j order")
            if (i, j) in seen:
                raise GraphError(f"duplicate edge ({i},{j})")
            if lam <= 0:
                raise GraphError(f"edge ({i},{j}) has non-positive rate {lam}")
            seen.add((i, j))

    @property
    def edge_rates(self) -> np.ndarray:
        return np.array([lam for (_, _, lam) in self.edges], dtype=float)

    def degree(self, i: int) -> int:
        return sum(1 for (a, b, _) in self.edges if i in (a, b))


@dataclass(frozen=True)
class SpectralReport:
    """Spectral constants of a rate-weighted graph.

    chi1 and chi2 have units of time; trace_lambda is events per unit time.
    For any connected graph, chi2 <= chi1.
    """

    chi1: float
    chi2: float
    trace_lambda: float
    lambda_norm: float

    def to_dict(self) -> dict:
        return {
            "chi1": self.chi1,
            "chi2": self.chi2,
            "trace_lambda": self.trace_lambda,
            "lambda_norm": self.lambda_norm,
        }


def _canonical_edges(pairs: Iterable[tuple[int, int]]) -> list[tuple[int, int]]:
    out = sorted((min(i, j), max(i, j)) for i, j in pairs)
    return out


def build_topology(
    kind: str,
    n: int,
    ratio: float = 1.0,
    edge_list: Sequence[tuple[int, int]] | None = None,
) -> Graph:
    """Build a named topology with rates normalized per node.

    ``ratio`` is the expected number of incident communication events per node
    per unit time (i.e. per gradient, since gradients spike at unit rate). Each
    edge gets rate ratio / max(deg(i), deg(j)), which for regular graphs equals
    ratio / deg and makes every node's incident rate exactly ``ratio``; for
    non-regular graphs no node exceeds ``ratio``. A ring at ratio 1 therefore
    has every edge at rate 0.5.
    """
    if n < 2:
        raise GraphError(f"need at least 2 nodes, got n={n}")
    if ratio <= 0:
        raise GraphError(f"ratio must be positive, got {ratio}")

    if kind == "ring":
        if n == 2:
            pairs = [(0, 1)]
        else:
            pairs = [(i, (i + 1) % n) for i in range(n)]
    elif kind == "complete":
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    elif kind == "star":
        pairs = [(0, i) for i in range(1, n)]
    elif kind == "custom":
        if edge_list is None:
            raise GraphError("custom topology requires an edge list")
        pairs = list(edge_list)
    else:
        raise GraphError(f"unknown topology kind {kind!r}")

    pairs = _canonical_edges(pairs)
    deg = np.zeros(n, dtype=int)
    for (i, j) in pairs:
        deg[i] += 1
        deg[j] += 1
    edges = tuple(
        (i, j, ratio / max(deg[i], deg[j])) for (i, j) in pairs
    )
    g = Graph(n=n, edges=edges)
    _check_connected_combinatorially(g)
    return g


def _check_connected_combinatorially(g: Graph) -> None:
    # Union-find; cheap and independent of the spectral tolerance.
    parent = list(range(g.n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for (i, j, _) in g.edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
    roots = {find(i) for i in range(g.n)}
    if len(roots) > 1:
        raise DisconnectedGraphError(
            f"graph has {len(roots)} connected components"
        )


def laplacian(g: Graph) -> np.ndarray:
    """Rate-weighted Laplacian: sum of lam_ij (e_i - e_j)(e_i - e_j)^T."""
    L = np.zeros((g.n, g.n))
    for (i, j, lam) in g.edges:
        L[i, i] += lam
        L[j, j] += lam
        L[i, j] -= lam
        L[j, i] -= lam
    return L


def _eig(g: Graph) -> tuple[np.ndarray, np.ndarray]:
    w, V = np.linalg.eigh(laplacian(g))
    return w, V


def laplacian_pinv(g: Graph) -> np.ndarray:
    """Moore-Penrose pseudoinverse of the Laplacian (full eigendecomposition)."""
    w, V = _eig(g)
    tol = ZERO_EIG_REL_TOL * float(w[-1])
    inv = np.where(w > tol, 1.0 / np.where(w > tol, w, 1.0), 0.0)
    if np.count_nonzero(w <= tol) > 1:
        raise DisconnectedGraphError("Laplacian has more than one zero eigenvalue")
    return (V * inv) @ V.T


def spectral_report(g: Graph) -> SpectralReport:
    """Compute chi1, chi2, Tr(Lambda) and ||Lambda|| for a connected graph."""
    w, V = _eig(g)
    lam_max = float(w[-1])
    tol = ZERO_EIG_REL_TOL * lam_max
    nonzero = w[w > tol]
    if len(nonzero) != g.n - 1:
        raise DisconnectedGraphError(
            "smallest nonzero eigenvalue below tolerance: graph is disconnected"
        )
    chi1 = 1.0 / float(nonzero[0])
    pinv = laplacian_pinv(g)
    chi2 = 0.5 * max(
        float(pinv[i, i] + pinv[j, j] - 2.0 * pinv[i, j]) for (i, j, _) in g.edges
    )
    trace = float(np.trace(laplacian(g)))
    return SpectralReport(
        chi1=chi1, chi2=chi2, trace_lambda=trace, lambda_norm=lam_max
    )


def effective_resistance(g: Graph, i: int, j: int) -> float:
    """Resistance (e_i - e_j)^T Lambda^+ (e_i - e_j); i, j need not be adjacent."""
    if not (0 <= i < g.n and 0 <= j < g.n):
        raise GraphError(f"node pair ({i},{j}) out of range for n={g.n}")
    if i == j:
        return 0.0
    pinv = laplacian_pinv(g)
    return float(pinv[i, i] + pinv[j, j] - 2.0 * pinv[i, j])
