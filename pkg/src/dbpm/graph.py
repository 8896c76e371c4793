"""Communication topology and doubly stochastic weights."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

from .rng import as_seed_sequence

MAX_CONNECT_ATTEMPTS = 1000
STOCHASTIC_TOL = 1e-12


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkModel:
    """Directed graph plus weight matrix ``W``.

    ``adjacency[i, j]`` means an edge ``i -> j`` (``i`` sends to ``j``), so
    ``w[j, i] > 0``. Self loops are implicit and never stored in ``adjacency``.
    Neighbor lists include the agent itself and are sorted.
    """

    weights: np.ndarray
    adjacency: np.ndarray
    in_neighbors: tuple[tuple[int, ...], ...] = field(init=False)
    out_neighbors: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        adj = np.array(self.adjacency, dtype=bool)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or adj.shape != w.shape:
            raise GraphError(f"weights {w.shape} and adjacency {adj.shape} must be matching square matrices")
        np.fill_diagonal(adj, False)
        w.setflags(write=False)
        adj.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "adjacency", adj)
        n = w.shape[0]
        ins = tuple(tuple(sorted({i, *np.flatnonzero(adj[:, i]).tolist()})) for i in range(n))
        outs = tuple(tuple(sorted({i, *np.flatnonzero(adj[i, :]).tolist()})) for i in range(n))
        object.__setattr__(self, "in_neighbors", ins)
        object.__setattr__(self, "out_neighbors", outs)

    @property
    def n_agents(self) -> int:
        return self.weights.shape[0]

    @property
    def eta(self) -> float:
        return min_positive_weight(self.weights)

    @classmethod
    def from_weights(cls, weights) -> "NetworkModel":
        """Build the model from ``W`` alone; edges are its off-diagonal support."""
        w = np.asarray(weights, dtype=np.float64)
        return cls(w, (w > 0).T)


def min_positive_weight(w: np.ndarray) -> float:
    pos = w[w > 0]
    return float(pos.min()) if pos.size else 0.0


def erdos_renyi(n_agents: int, p: float, seed, max_attempts: int = MAX_CONNECT_ATTEMPTS) -> np.ndarray:
    """Undirected G(n, p) adjacency, redrawn until connected.

    Every attempt draws from a fresh child of ``seed`` so the result depends
    only on ``(n_agents, p, seed)``.
    """
    if n_agents < 2:
        raise GraphError("need at least two agents")
    if not 0 <= p <= 1:
        raise GraphError(f"edge probability must lie in [0, 1], got {p}")
    ss = as_seed_sequence(seed)
    iu = np.triu_indices(n_agents, k=1)
    for child in ss.spawn(max_attempts):
        rng = np.random.default_rng(child)
        upper = rng.random(iu[0].size) < p
        adj = np.zeros((n_agents, n_agents), dtype=bool)
        adj[iu[0][upper], iu[1][upper]] = True
        adj |= adj.T
        if is_strongly_connected(adj):
            return adj
    raise GraphError(f"no connected graph after {max_attempts} attempts (n={n_agents}, p={p})")


def is_strongly_connected(adjacency: np.ndarray) -> bool:
    n_comp, _ = connected_components(np.asarray(adjacency, dtype=bool), directed=True, connection="strong")
    return n_comp == 1


def metropolis_hastings_weights(adjacency: np.ndarray) -> NetworkModel:
    """Metropolis-Hastings weights ``1/(1+max(d_i, d_j))`` on an undirected graph."""
    adj = np.array(adjacency, dtype=bool)
    np.fill_diagonal(adj, False)
    if not np.array_equal(adj, adj.T):
        raise GraphError("Metropolis-Hastings weights need a symmetric adjacency")
    if not is_strongly_connected(adj):
        raise GraphError("adjacency is not connected")
    deg = adj.sum(axis=1)
    w = np.where(adj, 1.0 / (1.0 + np.maximum(deg[:, None], deg[None, :])), 0.0)
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return NetworkModel(w, adj)


@dataclass
class ValidationReport:
    strongly_connected: bool
    row_stochastic: bool
    column_stochastic: bool
    support_matches: bool
    eta: float
    max_row_error: float
    max_col_error: float

    @property
    def doubly_stochastic(self) -> bool:
        return self.row_stochastic and self.column_stochastic

    @property
    def ok(self) -> bool:
        return self.strongly_connected and self.doubly_stochastic and self.support_matches and self.eta > 0

    def failures(self) -> list[str]:
        out = []
        if not self.strongly_connected:
            out.append("strong connectivity")
        if not self.row_stochastic:
            out.append(f"row sums (max error {self.max_row_error:.3g})")
        if not self.column_stochastic:
            out.append(f"column sums (max error {self.max_col_error:.3g})")
        if not self.support_matches:
            out.append("weight support vs in-neighbor sets")
        if not self.eta > 0:
            out.append("positive minimum weight")
        return out


def validate(model: NetworkModel, tol: float = STOCHASTIC_TOL) -> ValidationReport:
    w = model.weights
    row_err = float(np.max(np.abs(w.sum(axis=1) - 1.0)))
    col_err = float(np.max(np.abs(w.sum(axis=0) - 1.0)))
    expected = model.adjacency.T | np.eye(model.n_agents, dtype=bool)
    support_ok = bool(np.array_equal(w > 0, expected)) and bool(np.all(w >= 0))
    return ValidationReport(
        strongly_connected=is_strongly_connected(model.adjacency),
        row_stochastic=row_err <= tol,
        column_stochastic=col_err <= tol,
        support_matches=support_ok,
        eta=min_positive_weight(w),
        max_row_error=row_err,
        max_col_error=col_err,
    )


def save_weights_csv(model: NetworkModel | np.ndarray, path) -> None:
    w = model.weights if isinstance(model, NetworkModel) else np.asarray(model)
    lines = [",".join(repr(float(v)) for v in row) for row in w]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_weights_csv(path) -> NetworkModel:
    w = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    if w.shape[0] != w.shape[1]:
        raise GraphError(f"{path}: weight matrix must be square, got {w.shape}")
    return NetworkModel.from_weights(w)
