"""Ground-truth oracles: a centralized solver and an independent B = 1 baseline.

``distributed_subgradient_reference`` is deliberately written from the plain
consensus + subgradient recursion with dense linear algebra and shares no
update code with :mod:`dbpm.engine`. It only borrows the per-agent random
streams so both see the same samples.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .graph import NetworkModel
from .problems import SeparableQuadraticOracle, StochasticOracle
from .rng import AgentStream, spawn_streams


class ReferenceDivergence(RuntimeError):
    pass


@dataclass
class ReferenceSolution:
    x: np.ndarray
    f: float
    iterations: int
    step_scale: float
    tolerance: float
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        d = asdict(self)
        d["x"] = [float(v) for v in self.x]
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ReferenceSolution":
        d = dict(d)
        d["x"] = np.asarray(d["x"], dtype=np.float64)
        return cls(**d)


def centralized_solve(oracle: StochasticOracle, iterations: int = 100_000, step_scale: float | None = None,
                      x0=None, norm_cap: float | None = None) -> ReferenceSolution:
    """Full-batch subgradient descent on ``f = sum_i f_i`` with steps ``c / sqrt(t + 1)``.

    Without ``step_scale``, ``c`` is picked by :func:`pilot_step_scale`.

    Returns the best point visited. ``tolerance`` is the decrease of the best
    value over the second half of the run, an estimate of the remaining gap.
    Aborts when the cost exceeds twice its starting value. With ``norm_cap``
    set, stops early when the iterate norm passes the cap and flags it
    (unattained infimum).
    """
    x = np.zeros(oracle.n) if x0 is None else np.array(x0, dtype=np.float64)
    if step_scale is None:
        step_scale = pilot_step_scale(oracle, x, max(200, min(5000, iterations // 20)))
    f0 = oracle.cost(x)
    best_x, best_f = x.copy(), f0
    best_at_half = f0
    half = iterations // 2
    cap_hit = False
    t = 0
    for t in range(iterations):
        if t == half:
            best_at_half = best_f
        g = oracle.full_subgradient(x)
        x = x - step_scale / math.sqrt(t + 1.0) * g
        f = oracle.cost(x)
        if f < best_f:
            best_f, best_x = f, x.copy()
        if f > 2.0 * abs(f0) + 1e-12 and f > f0:
            raise ReferenceDivergence(f"cost doubled at iteration {t} ({f0:.6g} -> {f:.6g})")
        if norm_cap is not None and np.linalg.norm(x) > norm_cap:
            cap_hit = True
            break
    return ReferenceSolution(best_x, float(best_f), t + 1, float(step_scale), float(best_at_half - best_f),
                             {"norm_cap_hit": cap_hit, "f_start": float(f0)})


PILOT_SCALES = tuple(10.0 ** np.arange(-3.0, 1.01, 0.5))


def pilot_step_scale(oracle: StochasticOracle, x0, iterations: int = 2000, scales=PILOT_SCALES) -> float:
    """The scale among ``scales`` reaching the lowest cost in a short run from ``x0``."""
    best = None
    for c in scales:
        try:
            sol = centralized_solve(oracle, iterations, step_scale=float(c), x0=x0)
        except ReferenceDivergence:
            continue
        if best is None or sol.f < best[1]:
            best = (float(c), sol.f)
    if best is None:
        raise ReferenceDivergence("every pilot step scale diverged")
    return best[0]


def closed_form_solution(oracle: SeparableQuadraticOracle) -> ReferenceSolution:
    x = oracle.optimum
    return ReferenceSolution(x, float(oracle.cost(x)), 0, 0.0, 0.0, {"closed_form": True})


def reference_solution(oracle: StochasticOracle, iterations: int = 100_000, **kw) -> ReferenceSolution:
    if isinstance(oracle, SeparableQuadraticOracle):
        return closed_form_solution(oracle)
    return centralized_solve(oracle, iterations, **kw)


def problem_hash(description: dict, *arrays) -> str:
    h = hashlib.sha256(json.dumps(description, sort_keys=True).encode())
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


def cached_reference(oracle: StochasticOracle, cache_dir, key: str, iterations: int = 100_000) -> ReferenceSolution:
    """Load the solution stored under ``key`` or solve and store it."""
    path = Path(cache_dir) / f"reference_{key}.json"
    if path.exists():
        return ReferenceSolution.from_json(json.loads(path.read_text(encoding="utf-8")))
    sol = reference_solution(oracle, iterations)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(sol.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return sol


def distributed_subgradient_reference(network: NetworkModel, oracle: StochasticOracle, alpha, T: int, seed,
                                      x0: np.ndarray, p_on: float = 1.0) -> np.ndarray:
    """Trajectory of ``x_i <- sum_j w_ij x_j - alpha g_i(sum_j w_ij x_j; xi_i)``.

    Returns an array of shape ``(T + 1, N, n)``. Agents draw their samples
    from the same per-agent streams as the block method with a single block.
    """
    N = network.n_agents
    W = network.weights
    alpha = np.broadcast_to(np.asarray(alpha, dtype=np.float64), (N,))
    rngs, _ = spawn_streams(seed, N)
    streams = [AgentStream(r, p_on, [1.0], lambda g, k, i=i: oracle.draw_samples(g, i, k))
               for i, r in enumerate(rngs)]
    x = np.array(x0, dtype=np.float64)
    traj = np.empty((T + 1,) + x.shape)
    traj[0] = x
    for t in range(T):
        y = W @ x
        new = x.copy()
        for i in range(N):
            awake, _, xi = streams[i].draw(t)
            if not awake:
                continue
            g = oracle.subgradient(np.array([i]), y[i][None, :], np.asarray(xi)[None])[0]
            new[i] = y[i] - alpha[i] * g
        x = new
        traj[t + 1] = x
    return traj
