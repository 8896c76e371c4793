"""Stochastic objective oracles and the synthetic classification data.

Every oracle evaluates in batch: ``agents`` is an int array of length ``K``,
``X`` a ``(K, n)`` array of points and ``samples`` the matching per-row
sample draws. Randomness never lives in the oracle; callers draw samples from
their own streams with :meth:`StochasticOracle.draw_samples`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit
from ._kernels import logistic_l1_subgradient


@dataclass
class LabeledDataset:
    """Binary classification samples split across agents.

    ``features`` holds the raw ``d`` columns; :attr:`augmented` appends the
    constant-one column so that ``x = [theta, theta_0]``.
    """

    features: np.ndarray
    labels: np.ndarray
    agent_of: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        self.agent_of = np.asarray(self.agent_of, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ValueError("features must be (m, d) and labels (m,)")
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")

    @property
    def augmented(self) -> np.ndarray:
        return np.hstack([self.features, np.ones((self.features.shape[0], 1))])

    @property
    def dim(self) -> int:
        """Dimension of the decision variable (features + intercept)."""
        return self.features.shape[1] + 1

    @property
    def n_agents(self) -> int:
        return int(self.agent_of.max()) + 1

    def samples_per_agent(self) -> np.ndarray:
        return np.bincount(self.agent_of, minlength=self.n_agents)


def round_robin(n_points: int, n_agents: int) -> np.ndarray:
    return np.arange(n_points) % n_agents


def make_synthetic_clusters(n_points: int, dim: int, separation: float = 3.0, seed=0,
                            n_agents: int = 1) -> LabeledDataset:
    """Two unit-variance Gaussian clusters at ``+/- separation * u``.

    ``u`` is a random unit direction. Points are shuffled and then dealt
    round-robin to ``n_agents`` agents.
    """
    if n_points % 2:
        raise ValueError("n_points must be even")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(dim)
    u /= np.linalg.norm(u)
    half = n_points // 2
    labels = np.concatenate([np.ones(half), -np.ones(half)])
    points = rng.standard_normal((n_points, dim)) + separation * labels[:, None] * u[None, :]
    order = rng.permutation(n_points)
    return LabeledDataset(points[order], labels[order], round_robin(n_points, n_agents))


def save_dataset_csv(data: LabeledDataset, path) -> None:
    d = data.features.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"q{k}" for k in range(1, d + 1)] + ["label"])
        for row, b in zip(data.features, data.labels):
            w.writerow([repr(float(v)) for v in row] + [int(b)])


def load_dataset_csv(path, n_agents: int) -> LabeledDataset:
    """Read ``d`` feature columns plus a label column; agents get rows round-robin."""
    rows = list(csv.reader(Path(path).read_text(encoding="utf-8").splitlines()))
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    arr = np.array([[float(v) for v in r] for r in rows if r], dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise ValueError(f"{path}: need at least one feature column and a label column")
    return LabeledDataset(arr[:, :-1], arr[:, -1], round_robin(arr.shape[0], n_agents))


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


class StochasticOracle:
    """Base class: ``f_i(x) = E[h_i(x; xi)]`` and its stochastic subgradients."""

    n: int
    n_agents: int
    is_smooth = False
    is_separable = False

    def __init__(self):
        self.G: np.ndarray | None = None
        self.Gbar: np.ndarray | None = None

    # sampling
    def draw_samples(self, rng: np.random.Generator, agent: int, size: int) -> np.ndarray:
        raise NotImplementedError

    def sample_shape(self) -> tuple[int, ...]:
        return ()

    # evaluation
    def sample_cost(self, agents, X, samples) -> np.ndarray:
        raise NotImplementedError

    def subgradient(self, agents, X, samples) -> np.ndarray:
        """Full stochastic subgradient ``g_i(x; xi)`` per row."""
        raise NotImplementedError

    def block_gradient(self, agents, X, samples, sl: slice) -> np.ndarray:
        """Partial gradient of ``h_i`` w.r.t. one block (smooth oracles only)."""
        raise TypeError(f"{type(self).__name__} is not smooth")

    def separable_block_subgradient(self, agents, Xblock, samples, sl: slice) -> np.ndarray:
        """Subgradient of the block term, from that block's coordinates only."""
        raise TypeError(f"{type(self).__name__} is not separable")

    def local_costs(self, X) -> np.ndarray:
        """``(K, N)`` matrix of ``f_i(x_k)``."""
        raise NotImplementedError

    def cost(self, X) -> np.ndarray | float:
        """``f(x) = sum_i f_i(x)`` for one point or a stack of points."""
        X = np.asarray(X, dtype=np.float64)
        c = self.local_costs(np.atleast_2d(X)).sum(axis=1)
        return float(c[0]) if X.ndim == 1 else c

    def local_subgradient(self, agent: int, x) -> np.ndarray:
        """A subgradient of ``f_i`` at ``x`` (exact expectation)."""
        raise NotImplementedError

    def full_subgradient(self, x) -> np.ndarray:
        return sum(self.local_subgradient(i, x) for i in range(self.n_agents))

    def describe(self) -> dict:
        return {"kind": type(self).__name__, "n": self.n, "n_agents": self.n_agents}


class LogisticL1Oracle(StochasticOracle):
    """``h_i(x; r) = log(1 + exp(-b_r <x, q_r>)) + (lam/N) ||x||_1``, ``r`` uniform over agent i's rows."""

    def __init__(self, data: LabeledDataset, lam: float, n_agents: int | None = None):
        super().__init__()
        if lam < 0:
            raise ValueError("regularization weight must be nonnegative")
        self.data = data
        self.lam = float(lam)
        self.n_agents = int(n_agents if n_agents is not None else data.n_agents)
        if data.agent_of.max() >= self.n_agents:
            raise ValueError("dataset assigns samples to more agents than the oracle has")
        order = np.argsort(data.agent_of, kind="stable")
        self.q = np.ascontiguousarray(data.augmented[order])
        self.b = np.ascontiguousarray(data.labels[order], dtype=np.float64)
        counts = np.bincount(data.agent_of, minlength=self.n_agents)
        if np.any(counts == 0):
            raise ValueError("every agent needs at least one sample")
        self.counts = counts
        self.offsets = np.concatenate([[0], np.cumsum(counts)])
        self.row_agent = np.repeat(np.arange(self.n_agents), counts)
        self.n = self.q.shape[1]
        self.l1 = self.lam / self.n_agents

    @property
    def is_smooth(self):
        return self.lam == 0.0

    def draw_samples(self, rng, agent, size):
        return self.offsets[agent] + rng.integers(0, self.counts[agent], size=size)

    def _margins(self, X, samples):
        q = self.q[samples]
        return self.b[samples] * np.sum(X * q, axis=1), q

    def sample_cost(self, agents, X, samples):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        m, _ = self._margins(X, np.asarray(samples))
        return np.logaddexp(0.0, -m) + self.l1 * np.abs(X).sum(axis=1)

    def subgradient(self, agents, X, samples):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        samples = np.ascontiguousarray(samples, dtype=np.int64)
        return logistic_l1_subgradient(np.ascontiguousarray(X), self.q, self.b, samples, self.l1)

    def block_gradient(self, agents, X, samples, sl):
        if not self.is_smooth:
            raise TypeError("logistic oracle with an L1 term is not smooth")
        m, q = self._margins(np.atleast_2d(X), np.asarray(samples))
        coef = -self.b[samples] * expit(-m)
        return coef[:, None] * q[:, sl]

    def local_costs(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        m = (X @ self.q.T) * self.b[None, :]
        per_row = np.logaddexp(0.0, -m)
        sums = np.add.reduceat(per_row, self.offsets[:-1], axis=1)
        return sums / self.counts[None, :] + self.l1 * np.abs(X).sum(axis=1)[:, None]

    def local_subgradient(self, agent, x):
        x = np.asarray(x, dtype=np.float64)
        rows = np.arange(self.offsets[agent], self.offsets[agent + 1])
        g = self.subgradient(np.full(rows.size, agent), np.broadcast_to(x, (rows.size, x.size)), rows)
        return g.mean(axis=0)

    def full_subgradient(self, x):
        x = np.asarray(x, dtype=np.float64)
        m = self.b * (self.q @ x)
        coef = -self.b * expit(-m) / self.counts[self.row_agent]
        return coef @ self.q + self.lam * np.sign(x)

    def smooth_gradient_norm_bound(self, agent: int) -> float:
        rows = slice(self.offsets[agent], self.offsets[agent + 1])
        return float(np.linalg.norm(self.q[rows], axis=1).max())

    def describe(self):
        return {**super().describe(), "lam": self.lam, "samples": int(self.q.shape[0])}


class SeparableQuadraticOracle(StochasticOracle):
    """``h_i(x; xi) = 0.5 * ||x - (t_i + xi)||^2`` with ``xi ~ N(0, s^2 I)``.

    Smooth and block separable; the minimizer of ``sum_i f_i`` is the mean of
    the targets.
    """

    is_smooth = True
    is_separable = True

    def __init__(self, targets, noise_std: float = 0.0):
        super().__init__()
        if noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        self.targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
        self.noise_std = float(noise_std)
        self.n_agents, self.n = self.targets.shape

    @property
    def optimum(self) -> np.ndarray:
        return self.targets.mean(axis=0)

    def sample_shape(self):
        return (self.n,)

    def draw_samples(self, rng, agent, size):
        return self.noise_std * rng.standard_normal((size, self.n))

    def sample_cost(self, agents, X, samples):
        r = np.atleast_2d(X) - self.targets[np.asarray(agents)] - samples
        return 0.5 * np.sum(r * r, axis=1)

    def subgradient(self, agents, X, samples):
        return np.atleast_2d(X) - self.targets[np.asarray(agents)] - samples

    def block_gradient(self, agents, X, samples, sl):
        return np.atleast_2d(X)[:, sl] - self.targets[np.asarray(agents), sl] - samples[:, sl]

    def separable_block_subgradient(self, agents, Xblock, samples, sl):
        return Xblock - self.targets[np.asarray(agents), sl] - samples[:, sl]

    def local_costs(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        r = X[:, None, :] - self.targets[None, :, :]
        return 0.5 * np.sum(r * r, axis=2) + 0.5 * self.n * self.noise_std**2

    def local_subgradient(self, agent, x):
        return np.asarray(x, dtype=np.float64) - self.targets[agent]

    def describe(self):
        return {**super().describe(), "noise_std": self.noise_std}


class ZeroOracle(StochasticOracle):
    """Constant objective; the algorithm reduces to block consensus."""

    is_smooth = True
    is_separable = True

    def __init__(self, n: int, n_agents: int):
        super().__init__()
        self.n = int(n)
        self.n_agents = int(n_agents)

    def draw_samples(self, rng, agent, size):
        return np.zeros(size, dtype=np.int64)

    def sample_cost(self, agents, X, samples):
        return np.zeros(np.atleast_2d(X).shape[0])

    def subgradient(self, agents, X, samples):
        return np.zeros_like(np.atleast_2d(X), dtype=np.float64)

    def block_gradient(self, agents, X, samples, sl):
        return np.zeros_like(np.atleast_2d(X)[:, sl], dtype=np.float64)

    def separable_block_subgradient(self, agents, Xblock, samples, sl):
        return np.zeros_like(Xblock, dtype=np.float64)

    def local_costs(self, X):
        return np.zeros((np.atleast_2d(X).shape[0], self.n_agents))

    def local_subgradient(self, agent, x):
        return np.zeros(self.n)


def make_quadratic_targets(n_agents: int, n: int, spread: float = 1.0, seed=0) -> np.ndarray:
    """Per-agent targets uniform in ``[-spread, spread]^n``."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-spread, spread, size=(n_agents, n))


def logistic_l1_oracle(data: LabeledDataset, lam: float, n_agents: int) -> LogisticL1Oracle:
    return LogisticL1Oracle(data, lam, n_agents)


def separable_quadratic_oracle(targets, noise_std: float = 0.0) -> SeparableQuadraticOracle:
    return SeparableQuadraticOracle(targets, noise_std)


def estimate_bounds(oracle: StochasticOracle, probe_points: int, seed=0, center=None, radius: float = 1.0,
                    noise_draws: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Empirical maxima of ``||g_i||`` and ``||g_i||^2``.

    Probes are uniform in the box ``center +/- radius``. Finite datasets are
    scanned exhaustively; continuous noise uses ``noise_draws`` draws per probe.
    The estimates are stored on the oracle as ``G`` and ``Gbar``.
    """
    if probe_points < 1:
        raise ValueError("need at least one probe point")
    rng = np.random.default_rng(seed)
    center = np.zeros(oracle.n) if center is None else np.asarray(center, dtype=np.float64)
    probes = center + rng.uniform(-radius, radius, size=(probe_points, oracle.n))
    G = np.zeros(oracle.n_agents)
    for i in range(oracle.n_agents):
        if isinstance(oracle, LogisticL1Oracle):
            samples = np.arange(oracle.offsets[i], oracle.offsets[i + 1])
        else:
            samples = oracle.draw_samples(rng, i, noise_draws)
        k = len(samples)
        for x in probes:
            g = oracle.subgradient(np.full(k, i), np.broadcast_to(x, (k, oracle.n)), samples)
            G[i] = max(G[i], float(np.linalg.norm(g, axis=1).max()))
    oracle.G, oracle.Gbar = G, G**2
    return G, G**2
