"""The distributed block proximal method over synchronous simulated rounds.

Round ``t`` of the simulation:

1. (copy-table form) every agent overwrites, in its copy of each in-neighbor,
   the block that neighbor broadcast at round ``t - 1``;
2. every awake agent mixes its in-neighbors' estimates with its row of ``W``,
   draws a block, runs the proximal step on that block only and broadcasts the
   new block;
3. idle agents keep their estimate.

The compact form skips the copy tables and reads neighbor states directly.
Both forms accumulate the weighted sum over in-neighbors in the same order and
share the update kernel, so their trajectories coincide bit for bit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .blockcore import BlockPartition, BlockVector
from .geometry import BregmanGeometry, prox
from .graph import NetworkModel
from .problems import StochasticOracle
from .rng import AgentStream, CHUNK, spawn_streams
from .schedules import StepsizeSchedule
from ._kernels import BOX, UNCONSTRAINED, block_prox_rows, mix_rows

log = logging.getLogger(__name__)

VARIANTS = ("proximal", "subgradient", "smooth", "separable")
FORMULATIONS = ("copy_table", "compact")
ROW_SUM_TOL = 1e-12


class EngineError(RuntimeError):
    pass


@dataclass
class EngineConfig:
    variant: str = "proximal"
    formulation: str = "compact"
    horizon: int = 1000
    seed: int | np.random.SeedSequence = 0
    eval_every: int = 10
    track_agent_costs: bool = False
    record_events: bool = False
    record_states: bool = False
    check_invariants: bool = True
    debug: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"formulation must be one of {FORMULATIONS}, got {self.formulation!r}")
        if self.horizon < 0 or self.eval_every < 1:
            raise ValueError("horizon must be >= 0 and eval_every >= 1")


@dataclass
class RoundEvents:
    """What happened in one round.

    ``displacements[i]`` is ``x_{i,l}^{t+1} - y_{i,l}^t`` for the block ``l``
    agent ``i`` updated.
    """

    t: int
    awake: np.ndarray
    blocks: np.ndarray
    samples: np.ndarray
    broadcasts: list[tuple[int, int, np.ndarray]] = field(default_factory=list)
    displacements: dict[int, np.ndarray] = field(default_factory=dict)

    def drew(self, block: int) -> np.ndarray:
        """Indicator of agents that were awake and drew ``block``."""
        return self.awake & (self.blocks == block)


@dataclass
class AgentState:
    """One agent's view: its estimate, its copies of in-neighbors and its knobs."""

    id: int
    estimate: BlockVector
    copy_table: dict[int, np.ndarray]
    geometries: Sequence[BregmanGeometry]
    schedule: StepsizeSchedule
    p_on: float
    block_probs: np.ndarray
    stream: AgentStream | None = None

    @property
    def pi(self) -> np.ndarray:
        """Probability of being awake and drawing each block."""
        return self.p_on * self.block_probs


# ---------------------------------------------------------------- kernels

def neighbor_slots(network: NetworkModel) -> tuple[np.ndarray, np.ndarray]:
    """Padded in-neighbor index and weight tables, ``(N, max_in_degree)``.

    Padding slots point at the agent itself with weight zero.
    """
    n = network.n_agents
    width = max(len(nb) for nb in network.in_neighbors)
    idx = np.tile(np.arange(n)[:, None], (1, width))
    wts = np.zeros((n, width))
    for i, nb in enumerate(network.in_neighbors):
        idx[i, : len(nb)] = nb
        wts[i, : len(nb)] = network.weights[i, list(nb)]
    return idx, wts


def mix(rows: np.ndarray, slot_idx: np.ndarray, slot_w: np.ndarray, source: np.ndarray,
        per_row: bool, cols: slice = slice(None)) -> np.ndarray:
    """Weighted sums ``sum_j w_ij x_j`` for agents ``rows``, neighbor by neighbor.

    ``source`` is either the shared ``(N, n)`` state (``per_row=False``) or
    the ``(N, N, n)`` copy tables, row ``i`` holding agent ``i``'s copies.
    """
    c0, c1, _ = cols.indices(source.shape[-1])
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    if per_row:
        return mix_rows(rows, slot_idx, slot_w, _EMPTY2, source, True, c0, c1)
    return mix_rows(rows, slot_idx, slot_w, source, _EMPTY3, False, c0, c1)


_EMPTY2 = np.zeros((1, 1))
_EMPTY3 = np.zeros((1, 1, 1))


def _update_rows(variant, oracle, geometries, partition, fast_geom, agents, blocks, samples, alphas,
                 Xold, Y, sep_refresh=None):
    """New estimates of ``agents`` after one block-proximal step each.

    Returns ``(Xnew, q, gnorm)`` where ``q`` holds the displacement of the
    updated block (zero-padded to length ``n``) and ``gnorm`` the norm of the
    block subgradient used. ``sep_refresh(rows, sl)`` computes the refreshed
    block of ``y`` for the separable variant.
    """
    K = agents.size
    n = partition.total
    Xnew = Xold.copy()
    q = np.zeros((K, n))
    gnorm = np.zeros(K)
    if variant in ("proximal", "subgradient"):
        G = oracle.subgradient(agents, Y, samples)
        if fast_geom is not None:
            mask = partition.mask(blocks)
            if variant == "subgradient":
                U = Y - alphas[:, None] * G
            else:
                U = prox(fast_geom, Y, G, alphas, check=False)
            Xnew = np.where(mask, U, Xold)
            q = np.where(mask, U - Y, 0.0)
            gnorm = np.sqrt(np.sum(np.where(mask, G, 0.0) ** 2, axis=1))
            return Xnew, q, gnorm
    for b in np.unique(blocks):
        loc = np.flatnonzero(blocks == b)
        sl = partition.slice(b)
        if variant in ("proximal", "subgradient"):
            g = G[loc, sl]
            yb = Y[loc, sl]
        elif variant == "smooth":
            yb = Y[loc, sl]
            g = oracle.block_gradient(agents[loc], Y[loc], samples[loc], sl)
        else:
            yb = sep_refresh(loc, sl)
            g = oracle.separable_block_subgradient(agents[loc], yb, samples[loc], sl)
        if variant == "subgradient":
            u = yb - alphas[loc, None] * g
        else:
            u = prox(geometries[b], yb, g, alphas[loc], check=False)
        Xnew[loc, sl] = u
        q[loc, sl] = u - yb
        gnorm[loc] = np.sqrt(np.sum(g * g, axis=1))
    return Xnew, q, gnorm


# ---------------------------------------------------------------- single-agent operations

def consensus_step(agent: AgentState, weights_row) -> BlockVector:
    """``y_i = sum_j w_ij x_j|_i`` from the agent's copy table (own estimate for ``j = i``)."""
    w = np.asarray(weights_row, dtype=np.float64)
    if abs(w.sum() - 1.0) > ROW_SUM_TOL:
        raise EngineError(f"weight row of agent {agent.id} sums to {w.sum()!r}, not 1")
    out = None
    for j in sorted(set(agent.copy_table) | {agent.id}):
        xj = agent.estimate.data if j == agent.id else agent.copy_table[j]
        term = w[j] * xj
        out = term if out is None else out + term
    return BlockVector(out, agent.estimate.partition)


def block_update(agent: AgentState, y: BlockVector, block: int, sample, t: int, oracle: StochasticOracle,
                 variant: str = "proximal") -> BlockVector:
    """Prox step on block ``block`` at ``y``; every other block keeps the prior estimate."""
    part = agent.estimate.partition
    part.slice(block)
    steps = agent.schedule.at(t)
    alpha = np.array([steps[agent.id] if steps.size > 1 else steps[0]])
    sample = np.asarray(sample)[None]
    Y = y.data[None, :]

    def refresh(loc, sl):
        return Y[loc, sl]

    xnew, _, _ = _update_rows(variant, oracle, agent.geometries, part, None, np.array([agent.id]),
                              np.array([block]), sample, alpha, agent.estimate.data[None, :], Y, refresh)
    return BlockVector(xnew[0], part)


def sample_round_randomness(agent: AgentState, t: int):
    """``(awake, block, sample)`` of ``agent`` at round ``t`` from its private stream."""
    if agent.stream is None:
        raise EngineError(f"agent {agent.id} has no random stream")
    return agent.stream.draw(t)


# ---------------------------------------------------------------- simulation

def _normalize_probs(block_probs, n_agents, n_blocks):
    if block_probs is None:
        p = np.full((n_agents, n_blocks), 1.0 / n_blocks)
    else:
        p = np.asarray(block_probs, dtype=np.float64)
        if p.ndim == 1:
            p = np.tile(p, (n_agents, 1))
    if p.shape != (n_agents, n_blocks):
        raise ValueError(f"block distribution must have shape ({n_agents}, {n_blocks}), got {p.shape}")
    if np.any(p <= 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-12):
        raise ValueError("block probabilities must be strictly positive and sum to one per agent")
    return p


def initial_states(kind, n_agents, partition, geometries, rng) -> np.ndarray:
    """Default initial estimates: uniform in ``[-1, 1]``, zeros, or a given vector for all agents."""
    n = partition.total
    if isinstance(kind, str):
        if kind == "uniform":
            X = rng.uniform(-1.0, 1.0, size=(n_agents, n))
        elif kind == "zeros":
            X = np.zeros((n_agents, n))
        else:
            raise ValueError(f"unknown initialization {kind!r}")
    else:
        X = np.array(kind, dtype=np.float64)
        if X.ndim == 1:
            X = np.tile(X, (n_agents, 1))
        if X.shape != (n_agents, n):
            raise ValueError(f"initial states must have shape ({n_agents}, {n}), got {X.shape}")
        return X
    for b, g in enumerate(geometries):
        sl = partition.slice(b)
        if g.feasible_set == "simplex":
            X[:, sl] = g.initial_point(sl.stop - sl.start)
        elif g.feasible_set == "box":
            lo, hi = g.bounds(sl.stop - sl.start)
            X[:, sl] = np.clip(X[:, sl], lo, hi)
    return X


class Simulation:
    """One seeded run of the method on a fixed network and oracle."""

    def __init__(self, config: EngineConfig, network: NetworkModel, oracle: StochasticOracle,
                 partition: BlockPartition, schedule: StepsizeSchedule,
                 geometries: BregmanGeometry | Sequence[BregmanGeometry] | None = None,
                 p_on=1.0, block_probs=None, initial="uniform", f_ref: float | None = None):
        self.config = config
        self.network = network
        self.oracle = oracle
        self.partition = partition
        N, B, n = network.n_agents, partition.n_blocks, partition.total
        if oracle.n != n:
            raise ValueError(f"oracle dimension {oracle.n} does not match partition total {n}")
        if oracle.n_agents != N:
            raise ValueError(f"oracle has {oracle.n_agents} agents, network has {N}")
        if schedule.n_agents == 1 and N > 1:
            schedule = StepsizeSchedule(schedule.kind, schedule.base * N, schedule.exponent)
        if schedule.n_agents != N:
            raise ValueError("schedule must give one stepsize per agent")
        self.schedule = schedule
        if geometries is None:
            geometries = BregmanGeometry()
        if isinstance(geometries, BregmanGeometry):
            geometries = [geometries] * B
        self.geometries = list(geometries)
        if len(self.geometries) != B:
            raise ValueError(f"need one geometry per block ({B}), got {len(self.geometries)}")
        self.sigma = min(g.sigma for g in self.geometries)
        self._check_variant()
        p_on = np.broadcast_to(np.asarray(p_on, dtype=np.float64), (N,)).copy()
        if np.any(p_on <= 0) or np.any(p_on > 1):
            raise ValueError("awake probabilities must lie in (0, 1]")
        self.p_on = p_on
        self.block_probs = _normalize_probs(block_probs, N, B)
        self.pi = self.p_on[:, None] * self.block_probs
        self.f_ref = f_ref

        streams, aux = spawn_streams(config.seed, N)
        self.streams = [
            AgentStream(rng, p_on[i], self.block_probs[i], lambda r, k, i=i: oracle.draw_samples(r, i, k))
            for i, rng in enumerate(streams)
        ]
        self.X = initial_states(initial, N, partition, self.geometries, aux)
        for b, g in enumerate(self.geometries):
            if g.feasible_set != "all":
                g.check_feasible(self.X[:, partition.slice(b)], f"initial block {b}",
                                 strict_positive=g.kind == "entropy")
        self.slot_idx, self.slot_w = neighbor_slots(network)
        if np.any(np.abs(self.slot_w.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            raise EngineError("weight matrix rows must sum to one")
        first = self.geometries[0]
        self.fast_geom = None
        if first.elementwise and all(g == first for g in self.geometries):
            if first.feasible_set == "box":
                lo = np.concatenate([g.bounds(s)[0] for g, s in zip(self.geometries, partition.sizes)])
                hi = np.concatenate([g.bounds(s)[1] for g, s in zip(self.geometries, partition.sizes)])
                self.fast_geom = BregmanGeometry("quadratic", "box", tuple(lo), tuple(hi))
            else:
                self.fast_geom = first

        self.kernel_kind = None
        if config.variant in ("proximal", "subgradient") and self.fast_geom is not None \
                and self.fast_geom.kind == "quadratic":
            if self.fast_geom.feasible_set == "all":
                self.kernel_kind = UNCONSTRAINED
                self._lo = self._hi = np.zeros(n)
            elif self.fast_geom.feasible_set == "box":
                self.kernel_kind = BOX
                self._lo, self._hi = (np.ascontiguousarray(v, dtype=np.float64) for v in self.fast_geom.bounds(n))
        offs = np.asarray(partition.offsets, dtype=np.int64)
        self._starts, self._stops = offs[:-1], offs[1:]
        self._sizes = np.asarray(partition.sizes, dtype=np.int64)

        self.Y = self.X.copy()
        self.copies = None
        self._pending: list[tuple[int, int, np.ndarray]] = []
        if config.formulation == "copy_table":
            # bootstrap: every agent sends its whole initial estimate
            self.copies = np.zeros((N, N, n))
            for j in range(N):
                self.copies[list(network.out_neighbors[j]), j, :] = self.X[j]
        self.t = 0
        self.broadcast_floats = 0
        self.step_bound_violations = 0
        self.max_step_ratio = 0.0
        self.events: list[RoundEvents] = []
        self.states: list[np.ndarray] = [self.X.copy()] if config.record_states else []
        self._chunk_start = None
        from .metrics import RunTrace

        self.trace = RunTrace(N, partition, f_ref=f_ref)

    def _check_variant(self):
        v = self.config.variant
        if v == "subgradient":
            if any(g.kind != "quadratic" or g.feasible_set != "all" for g in self.geometries):
                raise ValueError("the block subgradient variant needs quadratic geometry on all of R^n")
        elif v == "smooth" and not self.oracle.is_smooth:
            raise ValueError("the smooth variant needs a smooth oracle")
        elif v == "separable" and not self.oracle.is_separable:
            raise ValueError("the separable variant needs a separable oracle")

    # randomness for all agents, refreshed once per chunk
    def _round_draws(self, t):
        if self._chunk_start is None or t >= self._chunk_start + CHUNK:
            arrs = [s.chunk_arrays(t) for s in self.streams]
            self._awake = np.stack([a[0] for a in arrs])
            self._blocks = np.stack([a[1] for a in arrs])
            self._samples = np.stack([a[2] for a in arrs])
            self._chunk_start = t
        k = t - self._chunk_start
        return self._awake[:, k], self._blocks[:, k], self._samples[:, k]

    def _apply_broadcasts(self):
        for j, b, payload in self._pending:
            self.copies[list(self.network.out_neighbors[j]), j, self.partition.slice(b)] = payload
        self._pending = []
        if self.config.debug:
            for i, nb in enumerate(self.network.in_neighbors):
                for j in nb:
                    if not np.array_equal(self.copies[i, j], self.X[j]):
                        raise EngineError(f"round {self.t}: copy of agent {j} at agent {i} is stale")

    def step(self) -> None:
        t = self.t
        cfg = self.config
        awake, blocks, samples = self._round_draws(t)
        if self.copies is not None:
            self._apply_broadcasts()
        act = np.flatnonzero(awake)
        ev = RoundEvents(t, awake.copy(), np.where(awake, blocks, -1), samples) if cfg.record_events else None
        if act.size:
            per_row = self.copies is not None
            source = self.copies if per_row else self.X
            alphas = self.schedule.at(t)[act]
            bl = blocks[act]
            if cfg.variant == "separable":
                Y = None

                def refresh(loc, sl):
                    rows = act[loc]
                    self.Y[rows, sl] = mix(rows, self.slot_idx, self.slot_w, source, per_row, sl)
                    return self.Y[rows, sl]
            else:
                Y = mix(act, self.slot_idx, self.slot_w, source, per_row)
                refresh = None
            if self.kernel_kind is not None:
                G = self.oracle.subgradient(act, Y, samples[act])
                qn, gnorm, finite = block_prox_rows(act, self.X, Y, np.ascontiguousarray(G), alphas,
                                                    self._starts[bl], self._stops[bl], self.kernel_kind,
                                                    self._lo, self._hi)
                if not finite:
                    raise EngineError(f"round {t}: non-finite estimate")
            else:
                Xnew, q, gnorm = _update_rows(cfg.variant, self.oracle, self.geometries, self.partition,
                                              self.fast_geom, act, bl, samples[act], alphas, self.X[act], Y,
                                              refresh)
                if not np.all(np.isfinite(Xnew)):
                    raise EngineError(f"round {t}: non-finite estimate")
                self.X[act] = Xnew
                qn = np.sqrt(np.sum(q * q, axis=1))
            if cfg.check_invariants:
                bound = alphas / self.sigma * gnorm
                tol = 1e-12 * (1.0 + np.abs(self.X[act]).max(axis=1))
                self.step_bound_violations += int(np.sum(qn > bound + tol))
                with np.errstate(divide="ignore", invalid="ignore"):
                    ratio = np.where(bound > 0, qn / bound, 0.0)
                self.max_step_ratio = max(self.max_step_ratio, float(ratio.max()))
            self.broadcast_floats += int(self._sizes[bl].sum())
            if self.copies is not None or ev is not None:
                sls = [self.partition.slice(b) for b in bl]
                msgs = [(int(i), int(b), self.X[i, sl].copy()) for i, b, sl in zip(act, bl, sls)]
                if self.copies is not None:
                    self._pending = msgs
                if ev is not None:
                    ev.broadcasts = msgs
                    ev.displacements = {int(i): self.X[i, sl] - Y[k, sl]
                                        if Y is not None else q[k, sl].copy()
                                        for k, (i, sl) in enumerate(zip(act, sls))}
        if ev is not None:
            self.events.append(ev)
        self.t += 1
        if cfg.record_states:
            self.states.append(self.X.copy())

    def _record(self):
        self.trace.record(self.t, self.X, self.oracle, self.broadcast_floats,
                          agent_costs=self.config.track_agent_costs)

    def run(self):
        """Run ``config.horizon`` rounds and return the :class:`RunTrace`."""
        cfg = self.config
        self._record()
        while self.t < cfg.horizon:
            try:
                self.step()
            except Exception as exc:
                raise EngineError(f"run aborted at round {self.t}: {exc}") from exc
            if self.t % cfg.eval_every == 0 or self.t == cfg.horizon:
                self._record()
        if self.copies is not None:
            self._apply_broadcasts()
        self.trace.step_bound_violations = self.step_bound_violations
        self.trace.max_step_ratio = self.max_step_ratio
        return self.trace

    def agent_states(self) -> list[AgentState]:
        """Per-agent views onto the simulation arrays."""
        out = []
        for i in range(self.network.n_agents):
            nb = [j for j in self.network.in_neighbors[i] if j != i]
            src = self.copies[i] if self.copies is not None else self.X
            out.append(AgentState(
                id=i,
                estimate=BlockVector(self.X[i], self.partition),
                copy_table={j: src[j] for j in nb},
                geometries=self.geometries,
                schedule=self.schedule,
                p_on=float(self.p_on[i]),
                block_probs=self.block_probs[i],
                stream=self.streams[i],
            ))
        return out


def run(config: EngineConfig, network: NetworkModel, oracle: StochasticOracle, partition: BlockPartition,
        schedule: StepsizeSchedule, **kwargs):
    """Build a :class:`Simulation`, run it, and return ``(trace, simulation)``."""
    sim = Simulation(config, network, oracle, partition, schedule, **kwargs)
    trace = sim.run()
    return trace, sim
