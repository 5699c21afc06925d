"""Synthetic per-worker objectives with analytically known constants.

Two families stand in for real losses at desk scale:

* quadratic: f_i(x) = 1/2 (x - c_i)^T A_i (x - c_i), strongly convex with
  spectrum of each A_i inside [mu, L] and a closed-form global optimum.
* perturbed quadratic: f_i(x) = 1/2 ||x - c_i||^2 + eps * sum_k cos(x_k),
  smooth non-convex with L = 1 + eps.

Heterogeneity is dialed exactly: the per-worker centers are spread around
their mean and rescaled so that (1/n) sum_i ||grad f_i(x*) - grad f(x*)||^2
equals the requested zeta^2 (closed form for both families).

Stochastic gradients add isotropic Gaussian noise of std ``sigma`` per
coordinate, so the scalar gradient variance of the noise model is sigma^2 * d.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

QUADRATIC = "quadratic"
PERTURBED = "perturbed-quadratic"


class ObjectiveError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectiveEnsemble:
    kind: str
    n: int
    d: int
    sigma: float
    zeta: float
    seed: int
    centers: np.ndarray                 # (n, d)
    mats: np.ndarray | None = None      # (n, d, d), quadratic only
    epsilon: float = 0.0                # perturbed only
    mu: float = 0.0                     # smallest eigenvalue over the ensemble
    L: float = 1.0                      # largest eigenvalue over the ensemble
    params: dict = field(default_factory=dict)  # builder arguments, for serialization

    def local_loss(self, i: int, x: np.ndarray) -> float:
        v = x - self.centers[i]
        if self.kind == QUADRATIC:
            return 0.5 * float(v @ self.mats[i] @ v)
        return 0.5 * float(v @ v) + self.epsilon * float(np.sum(np.cos(x)))

    def mean_loss(self, x: np.ndarray) -> float:
        return sum(self.local_loss(i, x) for i in range(self.n)) / self.n

    def local_grad(self, i: int, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise ObjectiveError(f"expected shape ({self.d},), got {x.shape}")
        if self.kind == QUADRATIC:
            return self.mats[i] @ (x - self.centers[i])
        return (x - self.centers[i]) - self.epsilon * np.sin(x)

    def local_stoch_grad(
        self, i: int, x: np.ndarray, rng: np.random.Generator
    ) -> np.ndarray:
        g = self.local_grad(i, x)
        if self.sigma > 0.0:
            g = g + self.sigma * rng.standard_normal(self.d)
        return g

    def mean_grad(self, x: np.ndarray) -> np.ndarray:
        g = np.zeros(self.d)
        for i in range(self.n):
            g += self.local_grad(i, x)
        return g / self.n

    def global_optimum(self) -> np.ndarray:
        if self.kind != QUADRATIC:
            raise ObjectiveError(
                "global optimum has a closed form only for quadratic ensembles"
            )
        A_sum = self.mats.sum(axis=0)
        rhs = np.einsum("ijk,ik->j", self.mats, self.centers)
        return np.linalg.solve(A_sum, rhs)

    def measured_heterogeneity(self) -> float:
        """(1/n) sum_i ||grad f_i(x*) - grad f(x*)||^2 at the ensemble optimum.

        For the perturbed family grad f_i - grad f = c_bar - c_i at every x,
        so the value is independent of x*.
        """
        if self.kind == QUADRATIC:
            x_star = self.global_optimum()
            grads = np.stack([self.local_grad(i, x_star) for i in range(self.n)])
        else:
            grads = self.centers.mean(axis=0) - self.centers
        mean = grads.mean(axis=0)
        return float(np.sum((grads - mean) ** 2) / self.n)

    def descriptor(self) -> dict:
        """JSON-safe reproducibility descriptor (hyperparameters, not matrices)."""
        return {"kind": self.kind, **self.params}


def from_descriptor(desc: dict) -> ObjectiveEnsemble:
    desc = dict(desc)
    kind = desc.pop("kind")
    if kind == QUADRATIC:
        return build_quadratic(**desc)
    if kind == PERTURBED:
        return build_perturbed_quadratic(**desc)
    raise ObjectiveError(f"unknown objective kind {kind!r}")


def _random_psd(rng: np.random.Generator, d: int, mu: float, L: float) -> np.ndarray:
    """Random symmetric matrix with spectrum in [mu, L], endpoints attained."""
    eigs = rng.uniform(mu, L, size=d)
    eigs[0], eigs[-1] = mu, L
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return (q * eigs) @ q.T


def _spread_centers(
    rng: np.random.Generator, n: int, d: int
) -> tuple[np.ndarray, np.ndarray]:
    base = rng.standard_normal(d)
    offsets = rng.standard_normal((n, d))
    offsets -= offsets.mean(axis=0)
    return base, offsets


def build_quadratic(
    n: int,
    d: int,
    mu: float = 1.0,
    L: float = 1.0,
    zeta: float = 0.0,
    sigma: float = 0.0,
    seed: int = 0,
) -> ObjectiveEnsemble:
    if mu <= 0:
        raise ObjectiveError(f"mu must be positive, got {mu}")
    if mu > L:
        raise ObjectiveError(f"need mu <= L, got mu={mu}, L={L}")
    if zeta < 0 or sigma < 0:
        raise ObjectiveError("zeta and sigma must be non-negative")
    rng = np.random.default_rng(seed)
    if mu == L:
        mats = np.broadcast_to(mu * np.eye(d), (n, d, d)).copy()
    else:
        mats = np.stack([_random_psd(rng, d, mu, L) for _ in range(n)])
    base, offsets = _spread_centers(rng, n, d)

    if zeta == 0.0:
        centers = np.tile(base, (n, 1))
    else:
        # zeta^2 scales exactly quadratically in the offset amplitude.
        probe = ObjectiveEnsemble(
            kind=QUADRATIC, n=n, d=d, sigma=0.0, zeta=0.0, seed=seed,
            centers=base + offsets, mats=mats,
        )
        raw = probe.measured_heterogeneity()
        if raw <= 0:
            raise ObjectiveError("cannot dial zeta > 0 with degenerate offsets")
        centers = base + (zeta / np.sqrt(raw)) * offsets

    eigs = np.linalg.eigvalsh(mats)
    return ObjectiveEnsemble(
        kind=QUADRATIC, n=n, d=d, sigma=sigma, zeta=zeta, seed=seed,
        centers=centers, mats=mats,
        mu=float(eigs.min()), L=float(eigs.max()),
        params=dict(n=n, d=d, mu=mu, L=L, zeta=zeta, sigma=sigma, seed=seed),
    )


def build_perturbed_quadratic(
    n: int,
    d: int,
    epsilon: float = 0.5,
    zeta: float = 0.0,
    sigma: float = 0.0,
    seed: int = 0,
) -> ObjectiveEnsemble:
    if not 0.0 <= epsilon < 1.0:
        raise ObjectiveError(f"epsilon must be in [0, 1), got {epsilon}")
    if zeta < 0 or sigma < 0:
        raise ObjectiveError("zeta and sigma must be non-negative")
    rng = np.random.default_rng(seed)
    base, offsets = _spread_centers(rng, n, d)
    if zeta == 0.0:
        centers = np.tile(base, (n, 1))
    else:
        # grad f_i - grad f = c_bar - c_i exactly, at every x.
        raw = float(np.sum(offsets ** 2) / n)
        if raw <= 0:
            raise ObjectiveError("cannot dial zeta > 0 with degenerate offsets")
        centers = base + (zeta / np.sqrt(raw)) * offsets
    return ObjectiveEnsemble(
        kind=PERTURBED, n=n, d=d, sigma=sigma, zeta=zeta, seed=seed,
        centers=centers, epsilon=epsilon,
        mu=1.0 - epsilon, L=1.0 + epsilon,
        params=dict(n=n, d=d, epsilon=epsilon, zeta=zeta, sigma=sigma, seed=seed),
    )
