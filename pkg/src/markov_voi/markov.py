"""Stochastic-matrix primitives: validation, stationary distributions,
nearly-completely-decomposable (NCD) chain generation and KL divergence.
"""
from dataclasses import dataclass

import numpy as np

from .errors import (
    EpsilonTooLargeError,
    InvalidDistributionError,
    LengthMismatchError,
    NegativeEntryError,
    NoConvergenceError,
    NonSquareError,
    RowSumError,
)

STATIONARY_TOL = 1e-12
STATIONARY_MAX_ITERS = 100_000


def validate_stochastic(matrix, tol=1e-12):
    """Check that ``matrix`` is square and row-stochastic.

    Entries in ``[-tol, 0)`` are tolerated (they are clamped to zero by
    :func:`clean_stochastic`). Returns ``True`` or raises.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NonSquareError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonSquareError("matrix has non-finite entries")
    bad = np.argwhere(a < -tol)
    if len(bad):
        i, j = bad[0]
        raise NegativeEntryError(int(i), int(j), float(a[i, j]))
    sums = np.where(a < 0, 0.0, a).sum(axis=1)
    for i, s in enumerate(sums):
        if abs(s - 1.0) > tol:
            raise RowSumError(i, float(s))
    return True


def clean_stochastic(matrix, tol=1e-12):
    """Validate and return a float copy with tiny negatives clamped to 0."""
    validate_stochastic(matrix, tol)
    a = np.array(matrix, dtype=float)
    a[a < 0] = 0.0
    return a


def stationary_distribution(pi, tol=STATIONARY_TOL, max_iters=STATIONARY_MAX_ITERS):
    """Invariant distribution by power iteration on ``pi.T`` from uniform.

    Stops once ``max|gamma @ pi - gamma| < tol``. Periodic or reducible
    chains typically fail to settle and raise :class:`NoConvergenceError`.
    """
    pi = np.asarray(pi, dtype=float)
    n = pi.shape[0]
    gamma = np.full(n, 1.0 / n)
    for _ in range(max_iters):
        nxt = gamma @ pi
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - gamma)) < tol:
            return nxt
        gamma = nxt
    raise NoConvergenceError(max_iters)


@dataclass(frozen=True)
class TransitionModel:
    """An ``n``-state chain: transition matrix plus its stationary law."""

    pi: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        pi = clean_stochastic(self.pi)
        gamma = np.array(self.gamma, dtype=float)
        if gamma.shape != (pi.shape[0],):
            raise LengthMismatchError(
                f"gamma has shape {gamma.shape}, expected ({pi.shape[0]},)")
        if np.any(gamma < 0) or abs(gamma.sum() - 1.0) > 1e-12:
            raise InvalidDistributionError("gamma is not a probability vector")
        if np.max(np.abs(gamma @ pi - gamma)) > 1e-10:
            raise InvalidDistributionError("gamma is not invariant under pi")
        pi.setflags(write=False)
        gamma.setflags(write=False)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def from_matrix(cls, pi, tol=STATIONARY_TOL, max_iters=STATIONARY_MAX_ITERS):
        pi = clean_stochastic(pi)
        return cls(pi, stationary_distribution(pi, tol, max_iters))

    @property
    def n(self):
        return self.pi.shape[0]


@dataclass(frozen=True)
class NcdSpec:
    """Recipe for a nearly-completely-decomposable chain ``Pi* + eps*C``."""

    block_sizes: tuple
    epsilon: float = 0.0
    seed: int = 0

    def __post_init__(self):
        sizes = tuple(int(b) for b in self.block_sizes)
        if not sizes or any(b < 1 for b in sizes):
            raise ValueError("block sizes must be positive integers")
        object.__setattr__(self, "block_sizes", sizes)
        if self.epsilon < 0:
            raise EpsilonTooLargeError("epsilon must be non-negative")
        # The coupling moves up to eps of each row off-block; once that
        # reaches half the row the chain is no longer nearly decomposable.
        if self.epsilon >= 0.5:
            raise EpsilonTooLargeError(
                f"epsilon={self.epsilon} would move at least as much mass "
                "off-block as remains within the block")

    @property
    def n(self):
        return sum(self.block_sizes)

    def labels(self):
        """Block index of every state."""
        return np.repeat(np.arange(len(self.block_sizes)), self.block_sizes)


def generate_ncd(spec):
    """Random NCD chain for ``spec``.

    Each within-block row is drawn from a symmetric Dirichlet(1). Row ``i``
    then hands ``eps * u_i`` (``u_i ~ U[0.5, 1]``) of its within-block mass,
    proportionally, to the off-block columns with Dirichlet(1) weights, so
    the coupling matrix has zero row sums and the result stays strictly
    positive whenever ``eps > 0``.
    """
    rng = np.random.default_rng(spec.seed)
    labels = spec.labels()
    n = spec.n
    pi_star = np.zeros((n, n))
    start = 0
    for size in spec.block_sizes:
        block = slice(start, start + size)
        pi_star[block, block] = rng.dirichlet(np.ones(size), size=size)
        start += size

    pi = pi_star.copy()
    if spec.epsilon > 0 and len(spec.block_sizes) > 1:
        u = rng.uniform(0.5, 1.0, size=n)
        for i in range(n):
            off = labels != labels[i]
            moved = spec.epsilon * u[i]
            pi[i, ~off] *= 1.0 - moved
            pi[i, off] = moved * rng.dirichlet(np.ones(off.sum()))
        if np.any(pi < 0):
            raise EpsilonTooLargeError("coupling produced a negative entry")
    pi /= pi.sum(axis=1, keepdims=True)
    return TransitionModel.from_matrix(pi)


def _check_distribution(p, name):
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise InvalidDistributionError(f"{name} is not a probability vector")


def kl_divergence(p, q):
    """``D(p || q)`` in bits; ``inf`` when ``p`` puts mass where ``q`` has none."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise LengthMismatchError(f"shapes {p.shape} and {q.shape} differ")
    _check_distribution(p, "p")
    _check_distribution(q, "q")
    mask = p > 0
    if np.any(q[mask] == 0):
        return np.inf
    return float(np.sum(p[mask] * np.log2(p[mask] / q[mask])))


def entropy_bits(p):
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))
