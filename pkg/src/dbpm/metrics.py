"""Consensus and optimality diagnostics along a run.

The quantities here mirror what the convergence analysis bounds: distance of
each agent from the network average, per-coordinate spread, running best
cost, the Lyapunov sum of Bregman divergences, and the realized random
row-stochastic matrices that drive block consensus.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .blockcore import BlockPartition, spread
from .geometry import BregmanGeometry, divergence
from .graph import NetworkModel
from .rng import make_generator

MU_FLOOR = 1e-12


def consensus_errors(X: np.ndarray) -> np.ndarray:
    """``||x_i - xbar||`` for every agent (rows of ``X``)."""
    X = np.asarray(X, dtype=np.float64)
    return np.linalg.norm(X - X.mean(axis=0), axis=1)


def block_spreads(X: np.ndarray, partition: BlockPartition) -> np.ndarray:
    """Largest per-coordinate spread across agents, one value per block."""
    per_coord = spread(X, axis=0)
    return np.maximum.reduceat(per_coord, np.asarray(partition.offsets[:-1]))


class RunTrace:
    """Metrics of one run, recorded every few rounds."""

    def __init__(self, n_agents: int, partition: BlockPartition, f_ref: float | None = None):
        self.n_agents = n_agents
        self.partition = partition
        self.f_ref = f_ref
        self.t: list[int] = []
        self.f_xbar: list[float] = []
        self.f_best_xbar: list[float] = []
        self.mean_agent_cost: list[float] = []
        self.f_best_agent_worst: list[float] = []
        self.errors: list[np.ndarray] = []
        self.spreads: list[np.ndarray] = []
        self.xbar: list[np.ndarray] = []
        self.broadcast_floats: list[int] = []
        self.step_bound_violations = 0
        self.max_step_ratio = 0.0
        self._best_agents: np.ndarray | None = None

    def record(self, t: int, X: np.ndarray, oracle, broadcast_floats: int, agent_costs: bool = False):
        xbar = X.mean(axis=0)
        f = float(oracle.cost(xbar))
        best = f if not self.f_best_xbar else min(self.f_best_xbar[-1], f)
        self.t.append(int(t))
        self.f_xbar.append(f)
        self.f_best_xbar.append(best)
        self.xbar.append(xbar)
        self.errors.append(np.linalg.norm(X - xbar, axis=1))
        self.spreads.append(block_spreads(X, self.partition))
        self.broadcast_floats.append(int(broadcast_floats))
        if agent_costs:
            fa = np.asarray(oracle.cost(X), dtype=np.float64)
            self._best_agents = fa if self._best_agents is None else np.minimum(self._best_agents, fa)
            self.mean_agent_cost.append(float(fa.mean()))
            self.f_best_agent_worst.append(float(self._best_agents.max()))
        else:
            self.mean_agent_cost.append(math.nan)
            self.f_best_agent_worst.append(math.nan)

    def __len__(self):
        return len(self.t)

    def index(self, t: int) -> int:
        try:
            return self.t.index(int(t))
        except ValueError:
            raise KeyError(f"round {t} was not recorded") from None

    def columns(self) -> dict[str, np.ndarray]:
        """All per-record series as named arrays (the CSV layout)."""
        B = self.partition.n_blocks
        t = np.asarray(self.t, dtype=np.float64)
        f_ref = math.nan if self.f_ref is None else self.f_ref
        errs = np.asarray(self.errors).reshape(len(self), self.n_agents)
        spr = np.asarray(self.spreads).reshape(len(self), B)
        cols = {
            "t": t,
            "t_over_B": t / B,
            "f_xbar": np.asarray(self.f_xbar),
            "f_best_xbar": np.asarray(self.f_best_xbar),
            "cost_error": np.asarray(self.f_xbar) - f_ref,
            "f_best_error": np.asarray(self.f_best_xbar) - f_ref,
            "mean_agent_cost": np.asarray(self.mean_agent_cost),
            "f_best_agent_worst": np.asarray(self.f_best_agent_worst),
            "consensus_max": errs.max(axis=1),
            "consensus_mean": errs.mean(axis=1),
            "spread_max": spr.max(axis=1),
            "broadcast_floats": np.asarray(self.broadcast_floats, dtype=np.float64),
        }
        for b in range(B):
            cols[f"spread_b{b}"] = spr[:, b]
        for i in range(self.n_agents):
            cols[f"err_a{i}"] = errs[:, i]
        return cols


def consensus_error(trace: RunTrace, t: int) -> np.ndarray:
    """Per-agent ``||x_i^t - xbar^t||`` at a recorded round."""
    return trace.errors[trace.index(t)].copy()


def average_columns(traces: Sequence[RunTrace]) -> dict[str, np.ndarray]:
    """Seed average of every trace column; traces must share their record rounds."""
    cols = [tr.columns() for tr in traces]
    ts = cols[0]["t"]
    for c in cols[1:]:
        if not np.array_equal(c["t"], ts):
            raise ValueError("traces were recorded at different rounds")
    return {k: np.mean([c[k] for c in cols], axis=0) for k in cols[0]}


def _fmt(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if v.is_integer() and abs(v) < 2**53:
        return str(int(v))
    return repr(v)


def write_columns_csv(cols: dict[str, np.ndarray], path) -> None:
    """CSV with a header row, ``repr`` floats and ``nan`` for missing values."""
    keys = list(cols)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in range(len(cols[keys[0]])):
            w.writerow([_fmt(cols[k][r]) for k in keys])


def read_columns_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body], dtype=np.float64).reshape(len(body), len(head))
    return {k: data[:, j] for j, k in enumerate(head)}


# ---------------------------------------------------------------- realized consensus matrices

def realized_consensus_matrix(events, W: np.ndarray, block: int) -> np.ndarray:
    """``(I - D) + D W`` with ``D`` marking agents awake that drew ``block``."""
    W = np.asarray(W, dtype=np.float64)
    d = np.asarray(events.awake & (events.blocks == block), dtype=np.float64)
    return np.diag(1.0 - d) + d[:, None] * W


def replay_block(events, W: np.ndarray, z: np.ndarray, block: int, partition: BlockPartition) -> np.ndarray:
    """Advance the stacked block ``z`` (``(N, n_l)``) one round with the realized matrix and displacements."""
    Wl = realized_consensus_matrix(events, W, block)
    e = np.zeros_like(z)
    for i, q in events.displacements.items():
        if events.blocks[i] == block:
            e[i] = q
    return Wl @ z + e


def replay_error(events_list, states, W: np.ndarray, partition: BlockPartition) -> float:
    """Largest deviation between replayed and recorded states over all rounds and blocks."""
    worst = 0.0
    for ev in events_list:
        X0, X1 = states[ev.t], states[ev.t + 1]
        for b in range(partition.n_blocks):
            sl = partition.slice(b)
            z1 = replay_block(ev, W, X0[:, sl], b, partition)
            worst = max(worst, float(np.max(np.abs(z1 - X1[:, sl]))))
    return worst


def empirical_block_selection(events_list, n_agents: int, n_blocks: int) -> np.ndarray:
    """Frequency with which each agent was awake and drew each block, ``(N, B)``."""
    counts = np.zeros((n_agents, n_blocks))
    for ev in events_list:
        idx = np.flatnonzero(ev.awake)
        counts[idx, ev.blocks[idx]] += 1
    return counts / max(len(events_list), 1)


# ---------------------------------------------------------------- contraction constants

@dataclass
class ContractionEstimate:
    mu: float
    M: float
    per_block_mu: list[float]
    one_step: bool = False
    truncated: bool = False
    fit_points: int = 0


def estimate_contraction(network: NetworkModel, pi, trials: int = 50, horizon: int = 200, seed=0,
                         floor_ratio: float = 1e-13) -> ContractionEstimate:
    """Fit ``E[d(z^t)] ~ M mu^t E[||z^0||]`` on pure block consensus.

    For each block, scalar states evolve under the realized matrices
    ``(I - D) + D W`` where agent ``i`` is selected with probability ``pi[i, l]``.
    ``log E[d]`` is regressed on ``t`` over the last half of the window in
    which the spread stays above ``floor_ratio`` times its initial value.
    ``M`` is the smallest constant making the fitted envelope dominate the
    averaged curve over that window.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    W = network.weights
    N = network.n_agents
    pi = np.atleast_2d(np.asarray(pi, dtype=np.float64))
    if pi.shape[0] != N:
        pi = pi.T
    rng = make_generator(seed)
    mus, Ms = [], []
    one_step = truncated = False
    min_points = None
    for b in range(pi.shape[1]):
        z = rng.uniform(-1.0, 1.0, size=(trials, N))
        norm0 = float(np.mean(np.linalg.norm(z, axis=1)))
        d = np.empty(horizon + 1)
        d[0] = float(np.mean(spread(z, axis=1)))
        for t in range(1, horizon + 1):
            sel = rng.random((trials, N)) < pi[:, b]
            z = np.where(sel, z @ W.T, z)
            d[t] = float(np.mean(spread(z, axis=1)))
        alive = np.flatnonzero(d > floor_ratio * d[0])
        last = int(alive[-1]) if alive.size else 0
        window = np.arange(last + 1)
        if last < horizon:
            truncated = True
        if last <= 1:
            one_step = True
            mus.append(MU_FLOOR)
            Ms.append(max(d[0] / norm0, 1e-300))
            min_points = 0
            continue
        tail = window[window.size // 2:]
        if tail.size < 2:
            tail = window
        slope, _ = np.polyfit(tail, np.log(d[tail]), 1)
        mu = float(np.clip(math.exp(slope), MU_FLOOR, 1.0))
        M = float(np.max(d[window] / (mu ** window.astype(float))) / norm0)
        mus.append(mu)
        Ms.append(M)
        min_points = tail.size if min_points is None else min(min_points, tail.size)
    return ContractionEstimate(mu=max(mus), M=max(Ms), per_block_mu=mus, one_step=one_step,
                               truncated=truncated, fit_points=int(min_points or 0))


def expected_block_matrix(W: np.ndarray, pi_block) -> np.ndarray:
    """``I - Pi + Pi W`` for one block's selection probabilities."""
    p = np.asarray(pi_block, dtype=np.float64)
    return np.eye(W.shape[0]) - np.diag(p) + p[:, None] * W


def second_eigenvalue_modulus(A: np.ndarray) -> float:
    ev = np.sort(np.abs(np.linalg.eigvals(A)))[::-1]
    return float(ev[1]) if ev.size > 1 else 0.0


# ---------------------------------------------------------------- Lyapunov function

def lyapunov(X: np.ndarray, partition: BlockPartition, geometries: BregmanGeometry | Sequence[BregmanGeometry],
             pi, x_ref) -> float:
    """``sum_i sum_l D_l(x_{i,l}, x_ref_l) / pi_{i,l}``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    x_ref = np.asarray(x_ref, dtype=np.float64)
    if isinstance(geometries, BregmanGeometry):
        geometries = [geometries] * partition.n_blocks
    pi = np.broadcast_to(np.asarray(pi, dtype=np.float64), (X.shape[0], partition.n_blocks))
    total = 0.0
    for b, g in enumerate(geometries):
        sl = partition.slice(b)
        ref = np.broadcast_to(x_ref[sl], X[:, sl].shape)
        total += float(np.sum(divergence(g, X[:, sl], ref) / pi[:, b]))
    return total


# ---------------------------------------------------------------- bound evaluation

@dataclass
class BoundReport:
    """Plug-in evaluation of the constant-stepsize consensus and optimality bounds."""

    mu: float
    M: float
    S_bar: float
    R_bar: float
    Q_bar: float
    Q: float
    R: float
    S: float
    t: np.ndarray = field(repr=False)
    consensus_bound: np.ndarray = field(repr=False)
    rate_bound: np.ndarray = field(repr=False)

    def summary(self) -> dict:
        d = asdict(self)
        for k in ("t", "consensus_bound", "rate_bound"):
            d.pop(k)
        return d


def bound_curves(a_m: float, a_M: float, B: int, G: float, Gbar: float, sigma: float, mu: float, M: float,
                 C: float, V0: float, horizon: int = 1000) -> BoundReport:
    """Evaluate the constant-stepsize bounds.

    ``consensus_bound[t]`` bounds ``E||x_i^t - xbar^t||`` (``t >= 1``; entry 0
    is ``C``) and tends to ``S_bar``; ``rate_bound[t]`` is
    ``(Q + mu^t R) / (t + 1) + S`` and bounds ``f_best(x_i^t) - f(x*)``.
    """
    if not 0.0 < mu < 1.0:
        raise ValueError(f"contraction factor must lie in (0, 1), got {mu}")
    one = 1.0 - mu
    S_bar = a_M * (M * B * G / sigma) * (2.0 - mu) / one
    R_bar = M * B * (a_M * G / (sigma * one**2) - C / one)
    Q_bar = C - a_M * (M * B * G / sigma) / one**2
    Q = V0 / a_m + 4.0 * G * (M * B * C / one + Q_bar)
    R = 4.0 * G * R_bar
    S = 4.0 * G * S_bar + (a_M**2 / a_m) * Gbar / (2.0 * sigma)
    t = np.arange(horizon + 1, dtype=np.float64)
    # geometric sum of mu^(t-s-2) over s = 0..t-2 is (1 - mu^(t-1)) / (1 - mu)
    geo = np.where(t >= 2, (1.0 - mu ** np.maximum(t - 1, 0)) / one, 0.0)
    cons = M * B * (mu ** np.maximum(t - 1, 0) * C + G / sigma * a_M * geo + G / sigma * a_M)
    cons[0] = C
    rate = (Q + mu**t * R) / (t + 1.0) + S
    return BoundReport(mu, M, S_bar, R_bar, Q_bar, Q, R, S, t, cons, rate)


def fraction_below(empirical, bound) -> float:
    empirical = np.asarray(empirical, dtype=np.float64)
    bound = np.asarray(bound, dtype=np.float64)
    return float(np.mean(empirical <= bound))


def write_summary_json(summary: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj
