"""Gossip topologies, mixing matrices, and their spectral analysis.

A mixing matrix W over n workers is symmetric, row-stochastic (W1 = 1) and
supported on the edges of a connected topology.  Averaging with W contracts
every non-consensus mode at a rate set by the spectrum
lambda_1 = 1 >= lambda_2 >= ... >= lambda_n, and the step-size theory built
on top requires lambda_2 < 1 and lambda_n > -1/3.  This module constructs
such matrices, decomposes them with an in-repo Jacobi eigensolver, and
evaluates the contraction constants

    v  = lambda_n - sqrt(lambda_n^2 - lambda_n)          (lambda_n < 0)
    C1 = max( 1/(1-|v|^2), 1/(1-lambda_2)^2 )
    C2 = max( lambda_n^2/(1-|v|^2),
              lambda_2^2 / ((1-sqrt(lambda_2))^2 (1-lambda_2)) )
    C3 = 1 - 24 C2 gamma^2 L^2
    A1 = 1 - 6 L^2 C1 gamma^2 / C3
    A2 = 1 - L gamma - 6 C2 gamma^4 L^4 / C3

together with the stepsize rule

    gamma = 1 / (8 sqrt(C2) L + 6 sqrt(C1) L + sigma sqrt(T/n)).

Branches that would take the square root of a negative number are vacuous:
the |v| branch applies only to negative eigenvalues (dropped when
lambda_n >= 0) and the sqrt(lambda_2) branch only to nonnegative ones
(dropped when lambda_2 < 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Matrix-property checks (symmetry, stochasticity, lambda bounds) use
# PROPERTY_TOL; orthogonality/reconstruction use the looser RECON_TOL.
PROPERTY_TOL = 1e-10
RECON_TOL = 1e-8
SYMMETRY_TOL = 1e-12

TOPOLOGY_KINDS = ("ring", "complete", "star", "custom")
SCHEMES = ("uniform-neighbor", "lazy-metropolis", "mean-all")


class EigenConvergenceError(RuntimeError):
    """Jacobi sweep budget exhausted; carries the remaining off-diagonal mass."""

    def __init__(self, residual: float, sweeps: int):
        self.residual = residual
        self.sweeps = sweeps
        super().__init__(
            f"eigensolver did not converge in {sweeps} sweeps "
            f"(off-diagonal residual {residual:.3e})"
        )


class TheoryPreconditionError(ValueError):
    """Raised when the chosen stepsize violates 1 - 24 C2 gamma^2 L^2 > 0."""


# ---------------------------------------------------------------------------
# topologies


@dataclass(frozen=True)
class Topology:
    """Connected worker graph; edges are unordered index pairs, no self loops."""

    kind: str
    n: int
    edges: frozenset[tuple[int, int]]

    def neighbors(self, i: int) -> list[int]:
        out = [b if a == i else a for a, b in self.edges if i in (a, b)]
        return sorted(out)

    def degree(self, i: int) -> int:
        return sum(1 for a, b in self.edges if i in (a, b))


def _is_connected(n: int, edges: frozenset[tuple[int, int]]) -> bool:
    if n == 1:
        return True
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {0}
    stack = [0]
    while stack:
        for j in adj[stack.pop()]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return len(seen) == n


def custom_topology(n: int, edges) -> Topology:
    """Build a custom topology from unordered index pairs, validating it."""
    if n < 1:
        raise ValueError(f"worker count must be >= 1, got {n}")
    norm = set()
    for a, b in edges:
        a, b = int(a), int(b)
        if a == b:
            raise ValueError(f"self loop ({a},{b}) not allowed; self weights live in the matrix")
        if not (0 <= a < n and 0 <= b < n):
            raise ValueError(f"edge ({a},{b}) out of range for n={n}")
        norm.add((min(a, b), max(a, b)))
    edge_set = frozenset(norm)
    if not _is_connected(n, edge_set):
        raise ValueError("topology is not connected")
    return Topology("custom", n, edge_set)


def build_topology(kind: str, n: int) -> Topology:
    """Ring (i ~ i+-1 mod n), complete (all pairs) or star (0 ~ everyone)."""
    if kind not in ("ring", "complete", "star"):
        raise ValueError(f"unknown topology kind {kind!r}")
    if n < 1:
        raise ValueError(f"worker count must be >= 1, got {n}")
    if kind == "ring":
        if n < 3:
            raise ValueError(f"ring requires n >= 3 (a {n}-node ring is degenerate)")
        edges = {(i, (i + 1) % n) for i in range(n)}
    elif kind == "star":
        if n < 2:
            raise ValueError(f"star requires n >= 2, got {n}")
        edges = {(0, i) for i in range(1, n)}
    else:
        edges = {(i, j) for i in range(n) for j in range(i + 1, n)}
    edges = frozenset((min(a, b), max(a, b)) for a, b in edges)
    return Topology(kind, n, edges)


# ---------------------------------------------------------------------------
# eigensolver


def _round_robin_pairs(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    # Tournament schedule: every index pair exactly once across n-1 rounds,
    # with the pairs inside a round pairwise disjoint.
    players = list(range(n))
    if n % 2:
        players.append(-1)
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        left, right = [], []
        for k in range(m // 2):
            a, b = players[k], players[m - 1 - k]
            if a >= 0 and b >= 0:
                left.append(min(a, b))
                right.append(max(a, b))
        rounds.append((np.array(left), np.array(right)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def symmetric_eigen(
    matrix: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by sweeps of Jacobi rotations.

    Pairs are visited in a fixed round-robin order so the disjoint rotations
    of a round can be applied as one vectorized similarity transform; a sweep
    covers every pair once.  Returns (eigenvalues, P) with eigenvalues
    nonincreasing, P orthogonal and A = P diag(eigenvalues) P^T.  Convergence
    is declared when the off-diagonal Frobenius norm drops below
    tol * max(1, ||A||_F); exceeding the sweep budget raises
    EigenConvergenceError.  Each eigenvector is sign-flipped so its first
    nonzero component is positive, which makes the decomposition
    reproducible.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] == 0:
        raise ValueError("empty matrix")
    asym = np.max(np.abs(a - a.T)) if a.size else 0.0
    if asym > PROPERTY_TOL:
        raise ValueError(f"matrix is not symmetric (max |A - A^T| = {asym:.3e})")

    n = a.shape[0]
    a = (a + a.T) / 2.0
    p = np.eye(n)
    scale = max(1.0, float(np.linalg.norm(a)))
    threshold = tol * scale
    # Entries below this can never push the off-diagonal norm past threshold.
    skip = threshold / math.sqrt(max(1, n * (n - 1)))
    rounds = _round_robin_pairs(n)

    def off_norm(m):
        off = m - np.diag(np.diag(m))
        return float(np.linalg.norm(off))

    sweeps = 0
    while off_norm(a) > threshold:
        if sweeps >= max_sweeps:
            raise EigenConvergenceError(off_norm(a), sweeps)
        sweeps += 1
        for left, right in rounds:
            aij = a[left, right]
            active = np.abs(aij) > skip
            if not np.any(active):
                continue
            li, rj, aij = left[active], right[active], aij[active]
            aii = a[li, li]
            ajj = a[rj, rj]
            theta = (ajj - aii) / (2.0 * aij)
            big = np.abs(theta) > 1e150
            theta_safe = np.where(big, 1.0, theta)
            t = np.where(
                big,
                1.0 / (2.0 * np.where(big, theta, 1.0)),
                np.sign(theta_safe) / (np.abs(theta_safe) + np.hypot(theta_safe, 1.0)),
            )
            t = np.where(theta == 0.0, 1.0, t)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # disjoint pairs: the whole round is one similarity transform
            ri, rj_rows = a[li, :].copy(), a[rj, :].copy()
            a[li, :] = c[:, None] * ri - s[:, None] * rj_rows
            a[rj, :] = s[:, None] * ri + c[:, None] * rj_rows
            ci, cj = a[:, li].copy(), a[:, rj].copy()
            a[:, li] = c * ci - s * cj
            a[:, rj] = s * ci + c * cj
            # pin each rotated 2x2 block to its exact values
            a[li, li] = aii - t * aij
            a[rj, rj] = ajj + t * aij
            a[li, rj] = 0.0
            a[rj, li] = 0.0
            pi, pj = p[:, li].copy(), p[:, rj].copy()
            p[:, li] = c * pi - s * pj
            p[:, rj] = s * pi + c * pj

    eigenvalues = np.diag(a).copy()
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = eigenvalues[order]
    p = p[:, order]
    for k in range(n):
        col = p[:, k]
        nz = np.nonzero(np.abs(col) > 1e-12 * max(1.0, float(np.max(np.abs(col)))))[0]
        if nz.size and col[nz[0]] < 0:
            p[:, k] = -col
    return eigenvalues, p


# ---------------------------------------------------------------------------
# mixing matrices


@dataclass(frozen=True)
class MixingMatrix:
    """Symmetric stochastic gossip matrix with its eigendecomposition."""

    n: int
    weights: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def lambda2(self) -> float:
        return float(self.eigenvalues[1]) if self.n > 1 else float(self.eigenvalues[0])

    @property
    def lambda_n(self) -> float:
        return float(self.eigenvalues[-1])


def mixing_matrix_from_weights(
    weights: np.ndarray, topology: Topology | None = None
) -> MixingMatrix:
    """Wrap a raw weight matrix, enforcing every structural invariant.

    Checks symmetry, row stochasticity, optional support on the topology's
    edges, lambda_1 = 1 with eigenvector 1/sqrt(n), orthogonality of the
    eigenvector matrix and reconstruction of W from it.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"weights must be square, got shape {w.shape}")
    n = w.shape[0]
    asym = float(np.max(np.abs(w - w.T)))
    if asym > SYMMETRY_TOL:
        raise ValueError(f"mixing matrix not symmetric (max |W - W^T| = {asym:.3e})")
    row_err = float(np.max(np.abs(w.sum(axis=1) - 1.0)))
    if row_err > PROPERTY_TOL:
        raise ValueError(f"mixing matrix rows do not sum to 1 (max error {row_err:.3e})")
    if topology is not None:
        if topology.n != n:
            raise ValueError(f"topology has {topology.n} workers, matrix has {n}")
        allowed = np.eye(n, dtype=bool)
        for a, b in topology.edges:
            allowed[a, b] = allowed[b, a] = True
        stray = np.abs(np.where(allowed, 0.0, w))
        if stray.size and float(stray.max()) > 0.0:
            i, j = np.unravel_index(int(stray.argmax()), stray.shape)
            raise ValueError(f"nonzero weight W[{i},{j}] on a non-edge")

    eigenvalues, p = symmetric_eigen(w)
    if abs(eigenvalues[0] - 1.0) > PROPERTY_TOL:
        raise ValueError(f"lambda_1 = {eigenvalues[0]!r} is not 1")
    ones = np.ones(n) / math.sqrt(n)
    v1 = p[:, 0]
    if min(float(np.max(np.abs(v1 - ones))), float(np.max(np.abs(v1 + ones)))) > RECON_TOL:
        raise ValueError("leading eigenvector is not proportional to the all-ones vector")
    if float(np.max(np.abs(p @ p.T - np.eye(n)))) > RECON_TOL:
        raise ValueError("eigenvector matrix is not orthogonal")
    recon = float(np.max(np.abs(p @ np.diag(eigenvalues) @ p.T - w)))
    if recon > RECON_TOL:
        raise ValueError(f"eigendecomposition does not reconstruct W (residual {recon:.3e})")
    return MixingMatrix(n=n, weights=w, eigenvalues=eigenvalues, eigenvectors=p)


def build_mixing_matrix(
    topology: Topology, scheme: str, self_weight: float | None = None
) -> MixingMatrix:
    """Build a mixing matrix over `topology` with the named weight scheme.

    uniform-neighbor puts 1/(deg+1) on a node and each of its neighbors
    (symmetric only on regular graphs); lazy-metropolis is (Wm + I)/2 of the
    Metropolis matrix and works on any topology; mean-all is the rank-one
    averaging matrix and requires a complete topology.  `self_weight`
    overrides the uniform-neighbor diagonal: each neighbor then carries
    (1 - self_weight)/deg.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown mixing scheme {scheme!r}")
    if self_weight is not None and scheme != "uniform-neighbor":
        raise ValueError("self_weight override only applies to uniform-neighbor")
    n = topology.n
    w = np.zeros((n, n))
    if scheme == "mean-all":
        if len(topology.edges) != n * (n - 1) // 2:
            raise ValueError("mean-all requires a complete topology")
        w[:] = 1.0 / n
    elif scheme == "uniform-neighbor":
        for i in range(n):
            deg = topology.degree(i)
            if self_weight is None:
                own = 1.0 / (deg + 1)
                share = own
            else:
                if not 0.0 <= self_weight < 1.0:
                    raise ValueError(f"self_weight must be in [0, 1), got {self_weight}")
                own = self_weight
                share = (1.0 - self_weight) / deg if deg else 0.0
            w[i, i] = own
            for j in topology.neighbors(i):
                w[i, j] = share
    else:
        for a, b in topology.edges:
            w[a, b] = w[b, a] = 1.0 / (1 + max(topology.degree(a), topology.degree(b)))
        for i in range(n):
            w[i, i] = 1.0 - w[i].sum()
        w = (w + np.eye(n)) / 2.0
    return mixing_matrix_from_weights(w, topology)


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class ValidationReport:
    """Per-condition pass/fail for the spectral-gap assumptions on W."""

    symmetric: bool
    row_stochastic: bool
    lambda2_below_one: bool
    lambda_n_above_third: bool
    lambda2: float
    lambda_n: float
    reasons: tuple[str, ...]

    @property
    def valid(self) -> bool:
        return (
            self.symmetric
            and self.row_stochastic
            and self.lambda2_below_one
            and self.lambda_n_above_third
        )

    def as_lines(self) -> list[str]:
        def flag(ok: bool) -> str:
            return "pass" if ok else "fail"

        return [
            f"symmetric={flag(self.symmetric)}",
            f"row_stochastic={flag(self.row_stochastic)}",
            f"lambda_2={self.lambda2:.10f}",
            f"lambda_n={self.lambda_n:.10f}",
            f"lambda_2_below_one={flag(self.lambda2_below_one)}",
            f"lambda_n_above_neg_third={flag(self.lambda_n_above_third)}",
            f"valid={'true' if self.valid else 'false'}",
        ]


def validate(matrix: MixingMatrix) -> ValidationReport:
    """Report symmetry, stochasticity, lambda_2 < 1 and lambda_n > -1/3.

    The spectral comparisons carry a PROPERTY_TOL slack so matrices sitting
    numerically on the -1/3 boundary (even uniform-neighbor rings) are
    admitted; anything meaningfully below is rejected.
    """
    w = matrix.weights
    reasons = []
    symmetric = float(np.max(np.abs(w - w.T))) <= SYMMETRY_TOL
    if not symmetric:
        reasons.append("W is not symmetric")
    row_stochastic = float(np.max(np.abs(w.sum(axis=1) - 1.0))) <= PROPERTY_TOL
    if not row_stochastic:
        reasons.append("W rows do not sum to 1")
    lam2 = matrix.lambda2
    lam_n = matrix.lambda_n
    lambda2_ok = lam2 < 1.0 - PROPERTY_TOL or matrix.n == 1
    if not lambda2_ok:
        reasons.append(f"lambda_2 = {lam2:.6g} >= 1")
    lambda_n_ok = lam_n > -1.0 / 3.0 - PROPERTY_TOL
    if not lambda_n_ok:
        reasons.append(f"lambda_n = {lam_n:.6g} <= -1/3")
    return ValidationReport(
        symmetric=symmetric,
        row_stochastic=row_stochastic,
        lambda2_below_one=lambda2_ok,
        lambda_n_above_third=lambda_n_ok,
        lambda2=lam2,
        lambda_n=lam_n,
        reasons=tuple(reasons),
    )


# ---------------------------------------------------------------------------
# contraction constants and stepsize


@dataclass(frozen=True)
class TheoryConstants:
    """Contraction constants of W for smoothness L and stepsize gamma.

    `v` is only defined for lambda_n < 0 (None otherwise).  C3 > 0 is a
    construction precondition; A1 and A2 may be negative for large gamma.
    """

    lambda2: float
    lambda_n: float
    v: float | None
    C1: float
    C2: float
    gamma: float
    C3: float
    A1: float
    A2: float
    L: float


def _abs_v(lambda_n: float) -> float:
    # |v| with v = lambda_n - sqrt(lambda_n^2 - lambda_n); v < 0 on (-1/3, 0)
    return math.sqrt(lambda_n * lambda_n - lambda_n) - lambda_n


_EIGEN_SNAP = 1e-12


def contraction_constants(matrix: MixingMatrix) -> tuple[float, float]:
    """(C1, C2) for a validated mixing matrix, before any stepsize choice.

    Eigenvalues within the solver tolerance of zero are treated as exactly
    zero, so rank-one averaging yields the exact constants (1, 0).
    """
    if matrix.n == 1:
        return 1.0, 0.0
    lam2 = matrix.lambda2
    lam_n = matrix.lambda_n
    if abs(lam2) <= _EIGEN_SNAP:
        lam2 = 0.0
    if abs(lam_n) <= _EIGEN_SNAP:
        lam_n = 0.0
    c1_branches = []
    c2_branches = []
    if lam_n < 0.0:
        av = _abs_v(lam_n)
        denom = 1.0 - av * av
        if denom <= 0.0:
            raise ValueError(
                f"|v| = {av:.6g} >= 1: lambda_n = {lam_n:.6g} at or below the -1/3 infimum"
            )
        c1_branches.append(1.0 / denom)
        c2_branches.append(lam_n * lam_n / denom)
    if lam2 >= 0.0:
        c1_branches.append(1.0 / (1.0 - lam2) ** 2)
        c2_branches.append(lam2 * lam2 / ((1.0 - math.sqrt(lam2)) ** 2 * (1.0 - lam2)))
    return max(c1_branches), max(c2_branches)


def theory_constants(matrix: MixingMatrix, L: float, gamma: float) -> TheoryConstants:
    """Evaluate v, C1, C2, C3, A1, A2 for (W, L, gamma).

    Requires validate(matrix) to pass, L > 0 and gamma > 0.  Raises
    TheoryPreconditionError when 1 - 24 C2 gamma^2 L^2 <= 0.
    """
    if L <= 0:
        raise ValueError(f"smoothness constant must be positive, got {L}")
    if gamma <= 0:
        raise ValueError(f"stepsize must be positive, got {gamma}")
    report = validate(matrix)
    if not report.valid:
        raise ValueError("invalid mixing matrix: " + "; ".join(report.reasons))
    lam2, lam_n = matrix.lambda2, matrix.lambda_n
    c1, c2 = contraction_constants(matrix)
    c3 = 1.0 - 24.0 * c2 * gamma * gamma * L * L
    if c3 <= 0.0:
        raise TheoryPreconditionError(
            f"stepsize violates precondition 1 - 24 C2 gamma^2 L^2 > 0 (got C3 = {c3:.6g})"
        )
    a1 = 1.0 - 6.0 * L * L * c1 * gamma * gamma / c3
    a2 = 1.0 - L * gamma - 6.0 * c2 * gamma**4 * L**4 / c3
    return TheoryConstants(
        lambda2=lam2,
        lambda_n=lam_n,
        v=lam_n - math.sqrt(lam_n * lam_n - lam_n) if lam_n < 0.0 else None,
        C1=c1,
        C2=c2,
        gamma=gamma,
        C3=c3,
        A1=a1,
        A2=a2,
        L=L,
    )


def recommended_stepsize(
    C1: float, C2: float, L: float, sigma: float, T: int, n: int
) -> float:
    """gamma = 1 / (8 sqrt(C2) L + 6 sqrt(C1) L + sigma sqrt(T/n)).

    With this choice C2 gamma^2 L^2 <= 1/64, C1 gamma^2 L^2 <= 1/36 and
    consequently C3 >= 1/2.
    """
    if C1 < 1.0:
        raise ValueError(f"C1 must be >= 1, got {C1}")
    if C2 < 0.0:
        raise ValueError(f"C2 must be >= 0, got {C2}")
    if L <= 0.0:
        raise ValueError(f"L must be positive, got {L}")
    if sigma < 0.0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if T < 1 or n < 1:
        raise ValueError(f"T and n must be >= 1, got T={T} n={n}")
    return 1.0 / (8.0 * math.sqrt(C2) * L + 6.0 * math.sqrt(C1) * L + sigma * math.sqrt(T / n))


# ---------------------------------------------------------------------------
# serialization


def dump_mixing(topology: Topology, matrix: MixingMatrix) -> dict:
    """JSON-ready dump: {"n", "kind", "weights" (row-major), "eigenvalues"}."""
    return {
        "n": matrix.n,
        "kind": topology.kind,
        "weights": [[float(x) for x in row] for row in matrix.weights],
        "eigenvalues": [float(x) for x in matrix.eigenvalues],
    }
