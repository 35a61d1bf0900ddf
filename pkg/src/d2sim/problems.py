"""Synthetic decentralized problem instances and their gradient oracles.

Each instance holds one data shard per worker and a smooth local objective
f_i; the global objective is f(x) = (1/n) sum_i f_i(x).  Two knobs control
the two variances that matter downstream: `heterogeneity` shifts the
per-worker data-generating model (outer variance, zeta), `noise` perturbs
targets within a shard (inner variance, sigma).

Least squares:      f_i(x) = ||A_i x - b_i||^2 / (2 m_i)
Label partition:    f_i(x) = mean_j log(1 + exp(-y_j a_j.x)) + RIDGE ||x||^2
                    (binary task: class 0 versus the rest)

For least squares all workers grow out of one shared base dataset (A, eps);
worker i perturbs both its features and its targets in proportion to the
heterogeneity knob h:

    A_i = A + h R_i,    b_i = A_i (x* + h u_i) + noise * eps

with per-worker seeded perturbations R_i and deterministic unit directions
u_i.  At h = 0 every shard is bit-identical, so zeta is exactly zero even
under noise; at h > 0 the local Hessians genuinely differ, which is what
makes plain decentralized SGD stall at a nonzero gradient floor while the
variance-reduced update does not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mixing import symmetric_eigen
from .rng import aux_stream

RIDGE = 1e-4
_BLOB_SCALE = 1.0

LEAST_SQUARES = "least-squares"
LABEL_PARTITION = "label-partition"


@dataclass(frozen=True)
class Shard:
    features: np.ndarray  # (m, dim)
    targets: np.ndarray  # (m,); real targets or +-1 labels

    @property
    def size(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class GradientSample:
    """One minibatch stochastic gradient with the sample indices it used."""

    worker: int
    value: np.ndarray
    indices: np.ndarray


@dataclass(frozen=True)
class VarianceEstimates:
    sigma_sq: float  # max over workers/probes of within-worker gradient variance
    zeta0: float  # exact heterogeneity at the origin


@dataclass(frozen=True)
class ProblemInstance:
    """Per-worker shards plus smooth local objectives with known L."""

    kind: str
    n: int
    dim: int
    shards: tuple[Shard, ...]
    L: float
    params: dict | None  # generator parameters incl. seed; None if hand-built

    def shard_size(self, worker: int) -> int:
        return self.shards[worker].size

    def local_loss(self, worker: int, x: np.ndarray) -> float:
        shard = self.shards[worker]
        if self.kind == LEAST_SQUARES:
            r = shard.features @ x - shard.targets
            return float(r @ r) / (2.0 * shard.size)
        margins = shard.targets * (shard.features @ x)
        return float(np.logaddexp(0.0, -margins).mean()) + RIDGE * float(x @ x)

    def local_gradient(self, worker: int, x: np.ndarray) -> np.ndarray:
        shard = self.shards[worker]
        if self.kind == LEAST_SQUARES:
            return shard.features.T @ (shard.features @ x - shard.targets) / shard.size
        margins = shard.targets * (shard.features @ x)
        coeff = -shard.targets * _sigmoid(-margins)
        return shard.features.T @ coeff / shard.size + 2.0 * RIDGE * x

    def batch_gradient(self, worker: int, x: np.ndarray, indices: np.ndarray) -> np.ndarray:
        shard = self.shards[worker]
        feats = shard.features[indices]
        targets = shard.targets[indices]
        if self.kind == LEAST_SQUARES:
            return feats.T @ (feats @ x - targets) / len(indices)
        margins = targets * (feats @ x)
        coeff = -targets * _sigmoid(-margins)
        return feats.T @ coeff / len(indices) + 2.0 * RIDGE * x

    def loss(self, x: np.ndarray) -> float:
        return sum(self.local_loss(i, x) for i in range(self.n)) / self.n

    def gradient(self, x: np.ndarray) -> np.ndarray:
        g = np.zeros(self.dim)
        for i in range(self.n):
            g += self.local_gradient(i, x)
        return g / self.n


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _gram_lmax(features: np.ndarray) -> float:
    gram = features.T @ features / features.shape[0]
    eigenvalues, _ = symmetric_eigen(gram)
    return float(eigenvalues[0])


def _unit_direction(worker: int, dim: int) -> np.ndarray:
    u = np.zeros(dim)
    u[worker % dim] = 1.0
    return u


def gen_least_squares(
    n: int,
    dim: int,
    samples_per_worker: int,
    heterogeneity: float,
    noise: float,
    seed: int,
) -> ProblemInstance:
    """Least-squares instance with tunable outer (zeta) and inner (sigma) variance."""
    if n < 1 or dim < 1 or samples_per_worker < 1:
        raise ValueError("n, dim and samples_per_worker must all be >= 1")
    if heterogeneity < 0 or noise < 0:
        raise ValueError("heterogeneity and noise must be >= 0")
    rng = aux_stream(seed, 0)
    a_base = rng.standard_normal((samples_per_worker, dim))
    x_star = rng.standard_normal(dim)
    eps = rng.standard_normal(samples_per_worker)
    shards = []
    for i in range(n):
        a = a_base + heterogeneity * rng.standard_normal((samples_per_worker, dim))
        target_model = x_star + heterogeneity * _unit_direction(i, dim)
        b = a @ target_model + noise * eps
        shards.append(Shard(features=a, targets=b))
    return ProblemInstance(
        kind=LEAST_SQUARES,
        n=n,
        dim=dim,
        shards=tuple(shards),
        L=max(_gram_lmax(s.features) for s in shards),
        params={
            "samples_per_worker": samples_per_worker,
            "heterogeneity": heterogeneity,
            "noise": noise,
            "seed": seed,
        },
    )


def gen_label_partition(
    n: int,
    dim: int,
    classes: int,
    samples_per_class: int,
    shuffled: bool,
    seed: int,
) -> ProblemInstance:
    """Gaussian-blob classification pool split by label block or round-robin.

    Unshuffled mode gives worker i exclusive access to classes/n consecutive
    classes; shuffled mode deals a random permutation of the pooled samples
    round-robin.  Either way each worker's rows keep the pool's generation
    order, so membership (not ordering) is the only thing the mode changes.
    """
    if n < 1 or dim < 1 or classes < 1 or samples_per_class < 1:
        raise ValueError("n, dim, classes and samples_per_class must all be >= 1")
    if not shuffled and classes % n != 0:
        raise ValueError(f"unshuffled mode needs classes divisible by n ({classes} % {n} != 0)")
    rng = aux_stream(seed, 0)
    means = _BLOB_SCALE * rng.standard_normal((classes, dim))
    total = classes * samples_per_class
    features = np.empty((total, dim))
    labels = np.empty(total)
    for c in range(classes):
        rows = slice(c * samples_per_class, (c + 1) * samples_per_class)
        features[rows] = means[c] + rng.standard_normal((samples_per_class, dim))
        labels[rows] = 1.0 if c == 0 else -1.0

    if shuffled:
        if total < n:
            raise ValueError(f"pool of {total} samples cannot cover {n} workers")
        perm = rng.permutation(total)
        index_sets = [np.sort(perm[i::n]) for i in range(n)]
    else:
        block = classes // n
        per_worker = block * samples_per_class
        index_sets = [np.arange(i * per_worker, (i + 1) * per_worker) for i in range(n)]

    shards = tuple(Shard(features=features[idx], targets=labels[idx]) for idx in index_sets)
    lmax = max(_gram_lmax(s.features) for s in shards)
    return ProblemInstance(
        kind=LABEL_PARTITION,
        n=n,
        dim=dim,
        shards=shards,
        L=0.25 * lmax + 2.0 * RIDGE,
        params={
            "classes": classes,
            "samples_per_class": samples_per_class,
            "shuffled": shuffled,
            "seed": seed,
        },
    )


def full_local_gradient(problem: ProblemInstance, worker: int, x: np.ndarray) -> np.ndarray:
    """Exact gradient of worker's local objective; deterministic."""
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.dim,):
        raise ValueError(f"expected a vector of length {problem.dim}, got shape {x.shape}")
    return problem.local_gradient(worker, x)


def stochastic_gradient(
    problem: ProblemInstance,
    worker: int,
    x: np.ndarray,
    batch_size: int,
    rng: np.random.Generator,
    with_replacement: bool = True,
) -> GradientSample:
    """Minibatch gradient from uniform with-replacement draws on the shard.

    Averages the per-sample gradients over the batch, so the expectation over
    draws equals full_local_gradient.  `with_replacement=False` exists for
    tests: at batch_size == shard size it reproduces the full gradient.
    """
    m = problem.shard_size(worker)
    if not 1 <= batch_size <= m:
        raise ValueError(f"batch_size must be in [1, {m}], got {batch_size}")
    x = np.asarray(x, dtype=float)
    if with_replacement:
        indices = rng.integers(0, m, size=batch_size)
    else:
        indices = np.sort(rng.permutation(m)[:batch_size])
    value = problem.batch_gradient(worker, x, indices)
    return GradientSample(worker=worker, value=value, indices=indices)


def estimate_variances(
    problem: ProblemInstance,
    probe_points: list[np.ndarray],
    samples: int,
    rng: np.random.Generator,
) -> VarianceEstimates:
    """Empirical sigma^2 (max over workers and probes) plus exact zeta_0.

    sigma^2 at a probe is the mean squared deviation of singleton stochastic
    gradients from the exact local gradient; zeta_0 needs no sampling.
    """
    if not probe_points:
        raise ValueError("need at least one probe point")
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    sigma_sq = 0.0
    for x in probe_points:
        x = np.asarray(x, dtype=float)
        for i in range(problem.n):
            full = problem.local_gradient(i, x)
            idx = rng.integers(0, problem.shard_size(i), size=samples)
            dev = 0.0
            for j in idx:
                d = problem.batch_gradient(i, x, np.array([j])) - full
                dev += float(d @ d)
            sigma_sq = max(sigma_sq, dev / samples)
    from .metrics import zeta0

    return VarianceEstimates(sigma_sq=sigma_sq, zeta0=zeta0(problem))


def problem_to_json(problem: ProblemInstance) -> dict:
    """Regenerate-from-seed serialization: {"kind", "n", "dim", "seed", "params"}."""
    if problem.params is None:
        raise ValueError("hand-built instances carry no generator parameters")
    params = dict(problem.params)
    seed = params.pop("seed")
    return {
        "kind": problem.kind,
        "n": problem.n,
        "dim": problem.dim,
        "seed": seed,
        "params": params,
    }


def problem_from_json(data: dict) -> ProblemInstance:
    kind = data["kind"]
    params = data["params"]
    if kind == LEAST_SQUARES:
        return gen_least_squares(
            n=data["n"],
            dim=data["dim"],
            samples_per_worker=params["samples_per_worker"],
            heterogeneity=params["heterogeneity"],
            noise=params["noise"],
            seed=data["seed"],
        )
    if kind == LABEL_PARTITION:
        return gen_label_partition(
            n=data["n"],
            dim=data["dim"],
            classes=params["classes"],
            samples_per_class=params["samples_per_class"],
            shuffled=params["shuffled"],
            seed=data["seed"],
        )
    raise ValueError(f"unknown problem kind {kind!r}")
