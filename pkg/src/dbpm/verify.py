"""Property checks grouped into suites, shared by ``dbpm verify`` and the test suite.

Each check returns a :class:`Check`; a suite returns a :class:`Report`.
Sizes default to quick settings; tests pass the full acceptance sizes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .blockcore import BlockPartition, spread
from .engine import EngineConfig, Simulation
from .geometry import BregmanGeometry, optimality_residual, prox
from .graph import NetworkModel, erdos_renyi, metropolis_hastings_weights
from .metrics import (bound_curves, empirical_block_selection, estimate_contraction, fraction_below, lyapunov,
                      realized_consensus_matrix, replay_error)
from .problems import (LogisticL1Oracle, SeparableQuadraticOracle, ZeroOracle, estimate_bounds,
                       make_quadratic_targets, make_synthetic_clusters)
from .reference import distributed_subgradient_reference
from .rng import derive_seeds, make_generator
from .schedules import StepsizeSchedule

SUITES = ("consensus", "prox", "equivalence", "bounds")


@dataclass
class Check:
    name: str
    ok: bool
    detail: str
    value: float | None = None


@dataclass
class Report:
    suite: str
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def failed(self) -> list[Check]:
        return [c for c in self.checks if not c.ok]

    def lines(self) -> list[str]:
        return [f"[{'PASS' if c.ok else 'FAIL'}] {self.suite}.{c.name}: {c.detail}" for c in self.checks]


# ---------------------------------------------------------------- testbeds

@dataclass(frozen=True)
class Testbed:
    network: NetworkModel
    oracle: object
    n: int

    @property
    def n_agents(self) -> int:
        return self.network.n_agents


def quadratic_testbed(n_agents: int = 10, n: int = 10, edge_prob: float = 0.4, noise_std: float = 0.1,
                      graph_seed: int = 4, target_seed: int = 3) -> Testbed:
    """Separable quadratic problem with a closed-form optimum."""
    net = metropolis_hastings_weights(erdos_renyi(n_agents, edge_prob, graph_seed))
    oracle = SeparableQuadraticOracle(make_quadratic_targets(n_agents, n, 1.0, target_seed), noise_std)
    return Testbed(net, oracle, n)


def logistic_testbed(n_agents: int = 48, n_points: int = 240, dim: int = 49, lam: float = 0.1,
                     edge_prob: float = 0.3, graph_seed: int = 1, data_seed: int = 2) -> Testbed:
    """The synthetic two-cluster logistic problem."""
    net = metropolis_hastings_weights(erdos_renyi(n_agents, edge_prob, graph_seed))
    data = make_synthetic_clusters(n_points, dim, 3.0, data_seed, n_agents)
    return Testbed(net, LogisticL1Oracle(data, lam, n_agents), dim + 1)


def simulate(bed: Testbed, B: int, horizon: int, seed, schedule: StepsizeSchedule | None = None, oracle=None,
             **kw) -> Simulation:
    """Build and run one simulation on ``bed``."""
    engine_keys = ("variant", "formulation", "eval_every", "track_agent_costs", "record_events", "record_states",
                   "check_invariants", "debug")
    ekw = {k: kw.pop(k) for k in engine_keys if k in kw}
    oracle = bed.oracle if oracle is None else oracle
    schedule = schedule or StepsizeSchedule.constant(0.1, bed.n_agents)
    sim = Simulation(EngineConfig(horizon=horizon, seed=seed, **ekw), bed.network, oracle,
                     BlockPartition.equal(bed.n, B), schedule, **kw)
    sim.run()
    return sim


def _keep(collect, sim) -> None:
    # traces carry the step-bound counters without the recorded states
    if collect is not None:
        collect.append(sim.trace)


# ---------------------------------------------------------------- prox

def check_quadratic_prox_exact(instances: int = 10_000, seed: int = 0) -> Check:
    rng = make_generator(seed)
    a = rng.normal(size=(instances, 7)) * 10.0 ** rng.uniform(-3, 3, size=(instances, 1))
    g = rng.normal(size=a.shape) * 10.0 ** rng.uniform(-3, 3, size=(instances, 1))
    c = 10.0 ** rng.uniform(-4, 1, size=instances)
    u = prox(BregmanGeometry(), a, g, c)
    exact = bool(np.array_equal(u, a - c[:, None] * g))
    return Check("quadratic_closed_form", exact, f"prox == a - c*g bit-for-bit on {instances} instances")


def _entropy_objective(a, g, c, u):
    u = np.maximum(u, 1e-300)
    return c * (u @ g) + np.sum(np.where(u > 0, u * np.log(u / a), 0.0) - u + a, axis=-1)


def grid_search_simplex3(a, g, c, final_step: float = 1e-7) -> np.ndarray:
    """Minimizer of ``c <g, u> + KL(u, a)`` on the 2-simplex by zooming grid search."""
    step = 0.01
    lo = np.array([0.0, 0.0])
    hi = np.array([1.0, 1.0])
    best = None
    while True:
        u1 = np.arange(lo[0], hi[0] + step / 2, step)
        u2 = np.arange(lo[1], hi[1] + step / 2, step)
        U1, U2 = np.meshgrid(u1, u2, indexing="ij")
        U3 = 1.0 - U1 - U2
        ok = (U3 >= 0) & (U1 >= 0) & (U2 >= 0)
        pts = np.stack([U1[ok], U2[ok], U3[ok]], axis=1)
        vals = _entropy_objective(a, g, c, pts)
        best = pts[int(np.argmin(vals))]
        if step <= final_step:
            return best
        lo = np.clip(best[:2] - 3 * step, 0.0, 1.0)
        hi = np.clip(best[:2] + 3 * step, 0.0, 1.0)
        step /= 10.0


def check_entropy_grid(instances: int = 20, tol: float = 1e-4, seed: int = 1) -> Check:
    rng = make_generator(seed)
    geom = BregmanGeometry("entropy", "simplex")
    worst = 0.0
    for _ in range(instances):
        a = rng.dirichlet(np.ones(3))
        g = rng.normal(size=3)
        c = float(rng.uniform(0.05, 2.0))
        u = prox(geom, a, g, c)
        worst = max(worst, float(np.max(np.abs(u - grid_search_simplex3(a, g, c)))))
    return Check("entropy_vs_grid", worst <= tol, f"max |prox - grid argmin| = {worst:.2e} (tol {tol:g})", worst)


def check_optimality_residuals(instances: int = 10_000, tol: float = -1e-9, seed: int = 2) -> Check:
    """First-order optimality ``<c g + grad w(u) - grad w(a), z - u> >= 0`` at random feasible ``z``."""
    rng = make_generator(seed)
    worst = math.inf
    geoms = [BregmanGeometry(), BregmanGeometry("quadratic", "box", -1.0, 1.0), BregmanGeometry("entropy", "simplex")]
    per = instances // len(geoms) + 1
    for geom in geoms:
        d = 6
        g = rng.normal(size=(per, d)) * 3.0
        c = rng.uniform(0.01, 2.0, size=per)
        if geom.feasible_set == "simplex":
            a = rng.dirichlet(np.ones(d), size=per)
            z = rng.dirichlet(np.ones(d), size=per)
        elif geom.feasible_set == "box":
            a = rng.uniform(-1, 1, size=(per, d))
            z = rng.uniform(-1, 1, size=(per, d))
        else:
            a = rng.normal(size=(per, d))
            z = rng.normal(size=(per, d)) * 5
        u = prox(geom, a, g, c)
        r = optimality_residual(geom, a, g, c, u, z)
        worst = min(worst, float(np.min(r)))
    return Check("optimality_residual", worst >= tol,
                 f"min residual {worst:.3e} over {per * len(geoms)} instances (tol {tol:g})", worst)


def suite_prox(full: bool = False) -> Report:
    rep = Report("prox")
    rep.checks.append(check_quadratic_prox_exact())
    rep.checks.append(check_entropy_grid(20 if full else 5))
    rep.checks.append(check_optimality_residuals())
    return rep


# ---------------------------------------------------------------- consensus

def check_consensus_matrices(rounds: int = 10_000, p_on: float = 0.7, B: int = 5, seed: int = 11,
                             bed: Testbed | None = None, collect: list | None = None) -> list[Check]:
    """Row sums, diagonal floor and mean selection frequency of the realized matrices, plus replay.

    ``collect``, when given, receives the run traces (as do the other checks).
    """
    bed = bed or quadratic_testbed()
    sim = simulate(bed, B, rounds, seed, p_on=p_on, record_events=True, record_states=True, eval_every=rounds)
    _keep(collect, sim)
    W = bed.network.weights
    eta = bed.network.eta
    worst_row = 0.0
    diag_ok = True
    for ev in sim.events:
        for b in range(B):
            Wl = realized_consensus_matrix(ev, W, b)
            worst_row = max(worst_row, float(np.max(np.abs(Wl.sum(axis=1) - 1.0))))
            drew = ev.drew(b)
            if np.any(np.diag(Wl)[drew] < eta - 1e-15) or np.any(Wl < 0):
                diag_ok = False
    freq = empirical_block_selection(sim.events, bed.n_agents, B)
    dev = float(np.max(np.abs(freq - sim.pi)))
    rep_err = replay_error(sim.events, sim.states, W, sim.partition)
    return [
        Check("row_stochastic", worst_row <= 1e-12, f"max |row sum - 1| = {worst_row:.2e} over {rounds} rounds",
              worst_row),
        Check("diagonal_floor", diag_ok, f"selected diagonals >= eta = {eta:.3g}, entries nonnegative"),
        Check("mean_selection", dev <= 0.02, f"max |mean D - Pi| = {dev:.4f} (tol 0.02)", dev),
        Check("replay", rep_err <= 1e-10, f"max replay deviation {rep_err:.2e} (tol 1e-10)", rep_err),
    ]


def check_spread_contraction(cases=None, rounds: int = 5000, tol: float = 1e-8, seed: int = 0,
                             collect: list | None = None) -> Check:
    """Pure consensus: per-coordinate spread never increases and ends below ``tol``."""
    cases = cases or [(10, 0.4, 0.5, 5), (6, 0.5, 1.0, 1), (8, 0.3, 0.7, 3)]
    worst_final = 0.0
    monotone = True
    for k, (N, p, p_on, B) in enumerate(cases):
        n = 2 * B
        net = metropolis_hastings_weights(erdos_renyi(N, p, 100 + k))
        bed = Testbed(net, ZeroOracle(n, N), n)
        sim = simulate(bed, B, rounds, derive_seeds(seed, len(cases))[k], p_on=p_on, record_states=True,
                       eval_every=rounds)
        _keep(collect, sim)
        S = np.asarray(sim.states)
        spreads = spread(S, axis=1)
        if np.any(np.diff(spreads, axis=0) > 0):
            monotone = False
        worst_final = max(worst_final, float(spreads[-1].max()))
    ok = monotone and worst_final < tol
    return Check("spread_contraction", ok,
                 f"nonincreasing every round: {monotone}; max final spread {worst_final:.2e} after {rounds} rounds"
                 f" (tol {tol:g})", worst_final)


def suite_consensus(full: bool = False) -> Report:
    rep = Report("consensus")
    rep.checks.extend(check_consensus_matrices(10_000 if full else 2000))
    rep.checks.append(check_spread_contraction(rounds=5000))
    return rep


# ---------------------------------------------------------------- equivalence

def check_b1_reference(seeds: int = 5, rounds: int = 1000, tol: float = 1e-12, bed: Testbed | None = None,
                       alpha: float = 0.2, collect: list | None = None) -> Check:
    """Engine with one block against the independent distributed subgradient implementation."""
    bed = bed or logistic_testbed()
    worst = 0.0
    for s in derive_seeds(0, seeds):
        sim = simulate(bed, 1, rounds, s, StepsizeSchedule.constant(alpha, bed.n_agents), record_states=True,
                       eval_every=rounds)
        _keep(collect, sim)
        ref = distributed_subgradient_reference(bed.network, bed.oracle, alpha, rounds, s, sim.states[0])
        worst = max(worst, float(np.max(np.abs(ref - np.asarray(sim.states)))))
    return Check("b1_reference", worst <= tol,
                 f"max |engine - reference| = {worst:.2e} over {rounds} rounds x {seeds} seeds (tol {tol:g})", worst)


def check_formulations(seeds: int = 5, rounds: int = 1000, blocks=(1, 5), p_ons=(0.7, 1.0),
                       bed: Testbed | None = None, debug_rounds: int = 50, collect: list | None = None) -> Check:
    """Copy-table and compact runs must agree bit for bit, state by state."""
    bed = bed or logistic_testbed()
    mismatches = []
    runs = 0
    for B, p_on, (k, s) in itertools.product(blocks, p_ons, enumerate(derive_seeds(1, seeds))):
        states = {}
        for form in ("compact", "copy_table"):
            sim = simulate(bed, B, rounds, s, StepsizeSchedule.constant(0.2, bed.n_agents), p_on=p_on,
                           formulation=form, record_states=True, eval_every=rounds)
            _keep(collect, sim)
            states[form] = np.asarray(sim.states)
        runs += 1
        if not np.array_equal(states["compact"], states["copy_table"]):
            mismatches.append(f"B={B} p_on={p_on} seed={k}")
        if k == 0 and debug_rounds:
            # copy tables checked against true states after every round
            simulate(bed, B, debug_rounds, s, StepsizeSchedule.constant(0.2, bed.n_agents), p_on=p_on,
                     formulation="copy_table", debug=True, eval_every=debug_rounds)
    ok = not mismatches
    detail = f"{runs} run pairs bit-identical over {rounds} rounds" if ok else "mismatch: " + ", ".join(mismatches)
    return Check("formulations", ok, detail)


def suite_equivalence(full: bool = False) -> Report:
    rep = Report("equivalence")
    rep.checks.append(check_b1_reference(5 if full else 2, 1000 if full else 300))
    rep.checks.append(check_formulations(5 if full else 1, 1000 if full else 200))
    return rep


# ---------------------------------------------------------------- bounds

def check_step_bound(sims) -> Check:
    """Zero step-bound violations over simulations or their traces."""
    viol = sum(s.step_bound_violations for s in sims)
    ratio = max((s.max_step_ratio for s in sims), default=0.0)
    return Check("step_bound", viol == 0, f"{viol} violations in {len(sims)} runs; max ||q|| / bound = {ratio:.6f}",
                 float(viol))


def plateau_mean(values, start_fraction: float = 0.5) -> float:
    v = np.asarray(values, dtype=np.float64)
    return float(v[int(start_fraction * v.size):].mean())


def consensus_plateau(bed: Testbed, alpha: float, seeds: int, rounds: int, B: int = 5, eval_every: int = 10):
    """Seed-averaged mean consensus error over the second half of a constant-stepsize run."""
    curves, sims = [], []
    for s in derive_seeds(7, seeds):
        sim = simulate(bed, B, rounds, s, StepsizeSchedule.constant(alpha, bed.n_agents), eval_every=eval_every)
        curves.append(sim.trace.columns()["consensus_mean"])
        sims.append(sim)
    return plateau_mean(np.mean(curves, axis=0)), sims


def check_plateau_scaling(alpha: float = 0.1, seeds: int = 20, rounds: int = 10_000, slack: float = 0.3,
                          bed: Testbed | None = None):
    """Halving the stepsize at least halves the consensus plateau, up to ``slack``."""
    bed = bed or quadratic_testbed()
    p_full, sims_a = consensus_plateau(bed, alpha, seeds, rounds)
    p_half, sims_b = consensus_plateau(bed, alpha / 2, seeds, rounds)
    limit = 0.5 * (1.0 + slack) * p_full
    ok = p_half <= limit
    return Check("plateau_scaling", ok,
                 f"plateau {p_full:.4f} at alpha={alpha:g}, {p_half:.4f} at alpha/2 (limit {limit:.4f}); "
                 f"ratio {p_full / p_half:.3f}", p_full / p_half), sims_a + sims_b


def check_diminishing(seeds: int = 20, rounds: int = 50_000, alpha0: float = 0.5, exponent: float = 0.75,
                      B: int = 5, tol: float = 1e-2, bed: Testbed | None = None):
    """Diminishing stepsizes: seed-averaged f_best(xbar) gap and max consensus error both below ``tol``."""
    bed = bed or quadratic_testbed()
    f_star = float(bed.oracle.cost(bed.oracle.optimum))
    gaps, cons, sims = [], [], []
    for s in derive_seeds(9, seeds):
        sim = simulate(bed, B, rounds, s, StepsizeSchedule.diminishing(alpha0, exponent, bed.n_agents),
                       f_ref=f_star, eval_every=max(1, rounds // 500))
        c = sim.trace.columns()
        gaps.append(c["f_best_error"][-1])
        cons.append(c["consensus_max"][-1])
        sims.append(sim)
    gap, con = float(np.mean(gaps)), float(np.mean(cons))
    ok = gap <= tol and con <= tol
    return Check("diminishing_exactness", ok,
                 f"f_best(xbar) - f* = {gap:.2e}, max_i ||x_i - xbar|| = {con:.2e} after {rounds} rounds "
                 f"(tol {tol:g})", max(gap, con)), sims


def check_bound_curves(seeds: int = 20, rounds: int = 2000, alpha: float = 0.05, B: int = 5,
                       bed: Testbed | None = None):
    """Empirical errors against the bounds evaluated with estimated constants."""
    bed = bed or quadratic_testbed()
    oracle = bed.oracle
    N = bed.n_agents
    f_star = float(oracle.cost(oracle.optimum))
    pi = np.full((N, B), 1.0 / B)
    est = estimate_contraction(bed.network, pi, trials=50, horizon=400, seed=5)
    G_i, Gbar_i = estimate_bounds(oracle, 200, seed=6, radius=1.0)
    G, Gbar = float(G_i.max()), float(Gbar_i.max())
    part = BlockPartition.equal(bed.n, B)
    sims, f_best, cons, C_i, V0 = [], [], [], [], []
    for s in derive_seeds(13, seeds):
        sim = simulate(bed, B, rounds, s, StepsizeSchedule.constant(alpha, N), f_ref=f_star, eval_every=1,
                       track_agent_costs=True, record_states=False)
        c = sim.trace.columns()
        f_best.append(c["f_best_agent_worst"] - f_star)
        cons.append(c["consensus_max"])
        sims.append(sim)
    # initial states are deterministic per seed; rebuild them for C and V0
    for s in derive_seeds(13, seeds):
        sim0 = simulate(bed, B, 0, s, StepsizeSchedule.constant(alpha, N), record_states=True)
        X0 = sim0.states[0]
        C_i.append(np.linalg.norm(X0, axis=1))
        V0.append(lyapunov(X0, part, BregmanGeometry(), pi, oracle.optimum))
    C = float(np.max(np.mean(C_i, axis=0)))
    rep = bound_curves(alpha, alpha, B, G, Gbar, 1.0, est.mu, est.M, C, float(np.mean(V0)), rounds)
    t = sims[0].trace.columns()["t"].astype(int)
    frac_rate = fraction_below(np.mean(f_best, axis=0)[1:], rep.rate_bound[t][1:])
    frac_cons = fraction_below(np.mean(cons, axis=0)[1:], rep.consensus_bound[t][1:])
    ok = frac_rate >= 0.95 and frac_cons >= 0.95
    return Check("bound_curves", ok,
                 f"estimate-based: mu={est.mu:.4f} M={est.M:.3g} G={G:.3g}; rounds below rate bound "
                 f"{frac_rate:.1%}, below consensus bound {frac_cons:.1%} (need 95%)",
                 min(frac_rate, frac_cons)), sims


def suite_bounds(full: bool = False) -> Report:
    rep = Report("bounds")
    sims = []
    if full:
        c, s = check_plateau_scaling()
    else:
        c, s = check_plateau_scaling(seeds=5, rounds=4000)
    rep.checks.append(c)
    sims += s
    if full:
        c, s = check_diminishing()
    else:
        c, s = check_diminishing(seeds=3, rounds=10_000)
    rep.checks.append(c)
    sims += s
    c, s = check_bound_curves(seeds=20 if full else 5, rounds=2000 if full else 500)
    rep.checks.append(c)
    sims += s
    rep.checks.append(check_step_bound(sims))
    return rep


# ---------------------------------------------------------------- block-count comparison

def check_block_comparison(result, max_ratio: float = 3.0, flat_fraction: float = 0.01) -> list[Check]:
    """Each seed-averaged cost-error curve decreases and flattens; plateaus agree within ``max_ratio``.

    A curve has plateaued when the decrease over its second half is at most
    ``flat_fraction`` of its total decrease.
    """
    checks = []
    levels = {}
    flat_ok, dec_ok = True, True
    notes = []
    for B, mean in sorted(result.means.items()):
        e = mean["cost_error"]
        level = float(e[-max(1, int(math.ceil(0.1 * e.size))):].mean())
        levels[B] = level
        total = e[0] - level
        late = e[e.size // 2] - level
        if not (total > 0 and level < 0.01 * e[0]):
            dec_ok = False
        if not (total > 0 and late <= flat_fraction * total):
            flat_ok = False
        notes.append(f"B={B}: {level:.4g}")
    ratio = max(levels.values()) / min(levels.values()) if min(levels.values()) > 0 else math.inf
    checks.append(Check("curves_decrease", dec_ok, "plateau below 1% of the initial error for every B"))
    checks.append(Check("curves_plateau", flat_ok,
                        f"second-half decrease <= {flat_fraction:.0%} of the total for every B"))
    checks.append(Check("plateau_agreement", ratio <= max_ratio,
                        f"plateaus on the t/B axis {', '.join(notes)}; max/min = {ratio:.3f} (limit {max_ratio:g})",
                        ratio))
    return checks


SUITE_RUNNERS: dict[str, Callable[[bool], Report]] = {
    "consensus": suite_consensus,
    "prox": suite_prox,
    "equivalence": suite_equivalence,
    "bounds": suite_bounds,
}


def run_suite(name: str, full: bool = False) -> list[Report]:
    if name == "all":
        return [SUITE_RUNNERS[s](full) for s in SUITES]
    if name not in SUITE_RUNNERS:
        raise ValueError(f"unknown suite {name!r}; choose from {SUITES + ('all',)}")
    return [SUITE_RUNNERS[name](full)]
