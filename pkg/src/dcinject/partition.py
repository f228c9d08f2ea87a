"""Label-skewed client partitioning with per-class Dirichlet proportions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_RETRIES = 1000


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class PartitionPlan:
    assignments: tuple[tuple[int, ...], ...]
    alpha_dirichlet: float
    seed: int

    @property
    def n_clients(self) -> int:
        return len(self.assignments)

    def sizes(self) -> list[int]:
        return [len(a) for a in self.assignments]

    def to_json(self) -> dict:
        return {
            "alpha_dirichlet": self.alpha_dirichlet,
            "seed": self.seed,
            "clients": {str(i): list(a) for i, a in enumerate(self.assignments)},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PartitionPlan":
        clients = obj["clients"]
        assignments = tuple(tuple(int(j) for j in clients[str(i)]) for i in range(len(clients)))
        return cls(assignments, float(obj["alpha_dirichlet"]), int(obj["seed"]))


def _dirichlet(rng: np.random.Generator, alpha: float, n: int) -> np.ndarray:
    g = rng.gamma(alpha, 1.0, size=n)
    total = g.sum()
    if total <= 0.0:
        # every gamma draw underflowed; the limit is a point mass
        p = np.zeros(n)
        p[rng.integers(n)] = 1.0
        return p
    return g / total


def _draw(labels: np.ndarray, n_clients: int, alpha: float, seed: int) -> list[list[int]]:
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(n_clients)]
    for k in np.unique(labels):
        idx = np.flatnonzero(labels == k)
        rng.shuffle(idx)
        p = _dirichlet(rng, alpha, n_clients)
        cuts = np.floor(np.cumsum(p)[:-1] * len(idx)).astype(np.int64)
        for client, part in enumerate(np.split(idx, cuts)):
            buckets[client].extend(int(j) for j in part)
    return buckets


def dirichlet_partition(
    labels, n_clients: int, alpha_dirichlet: float, seed: int, max_retries: int = MAX_RETRIES
) -> PartitionPlan:
    """Split sample indices across clients with Dirichlet label skew.

    If a draw leaves some client empty, the whole plan is redrawn with
    ``seed + 1``, ``seed + 2``, ... up to ``max_retries`` times.
    """
    labels = np.asarray(labels)
    if labels.size == 0:
        raise PartitionError("labels must be nonempty")
    if n_clients < 1:
        raise PartitionError("n_clients must be >= 1")
    if not alpha_dirichlet > 0:
        raise PartitionError("alpha_dirichlet must be positive")
    if n_clients > labels.size:
        raise PartitionError(f"cannot give {n_clients} clients a sample each from {labels.size}")
    for attempt in range(max_retries + 1):
        buckets = _draw(labels, n_clients, alpha_dirichlet, seed + attempt)
        if all(buckets):
            return PartitionPlan(
                tuple(tuple(sorted(b)) for b in buckets), float(alpha_dirichlet), int(seed)
            )
    raise PartitionError(
        f"some client stayed empty after {max_retries} redraws "
        f"(n_clients={n_clients}, alpha={alpha_dirichlet}, n={labels.size})"
    )


def class_fractions(plan: PartitionPlan, labels, num_classes: int) -> np.ndarray:
    """(n_clients, num_classes) label histogram of each client, row-normalized."""
    labels = np.asarray(labels)
    out = np.zeros((plan.n_clients, num_classes))
    for i, idx in enumerate(plan.assignments):
        counts = np.bincount(labels[list(idx)], minlength=num_classes)
        out[i] = counts / counts.sum()
    return out
