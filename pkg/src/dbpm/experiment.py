"""Build problems, networks and runs from an :class:`ExperimentConfig` and write the artifacts.

Output layout under ``output.dir``::

    config.resolved.toml
    trace_B{B}_seed{k}.csv     one per block count and seed
    mean_B{B}.csv              seed average
    comparison.csv             all block counts on a shared t/B axis
    summary.json
    reference/reference_<hash>.json
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .blockcore import BlockPartition
from .config import ExperimentConfig, dump_config
from .engine import EngineConfig, Simulation
from .geometry import BregmanGeometry
from .graph import NetworkModel, erdos_renyi, load_weights_csv, metropolis_hastings_weights, validate
from .metrics import average_columns, write_columns_csv, write_summary_json
from .problems import (LabeledDataset, SeparableQuadraticOracle, StochasticOracle, ZeroOracle, load_dataset_csv,
                       logistic_l1_oracle, make_quadratic_targets, make_synthetic_clusters)
from .reference import ReferenceSolution, cached_reference, problem_hash
from .rng import derive_seeds
from .schedules import StepsizeSchedule

log = logging.getLogger(__name__)

PLATEAU_FRACTION = 0.1


def build_dataset(cfg: ExperimentConfig) -> LabeledDataset:
    p, N = cfg.problem, cfg.network.n_agents
    if p.dataset:
        return load_dataset_csv(p.dataset, N)
    return make_synthetic_clusters(p.n_points, p.dim, p.separation, p.data_seed, N)


def build_oracle(cfg: ExperimentConfig) -> StochasticOracle:
    p, N = cfg.problem, cfg.network.n_agents
    if p.kind == "logistic_l1":
        data = build_dataset(cfg)
        if data.dim != p.n:
            raise ValueError(f"dataset has {data.dim - 1} features, config says dim = {p.dim}")
        return logistic_l1_oracle(data, p.lam, N)
    if p.kind == "separable_quadratic":
        return SeparableQuadraticOracle(make_quadratic_targets(N, p.n, p.target_spread, p.data_seed), p.noise_std)
    return ZeroOracle(p.n, N)


def build_network(cfg: ExperimentConfig) -> NetworkModel:
    net = cfg.network
    if net.weights_file:
        model = load_weights_csv(net.weights_file)
        if model.n_agents != net.n_agents:
            raise ValueError(f"weights file has {model.n_agents} agents, config says {net.n_agents}")
    else:
        model = metropolis_hastings_weights(erdos_renyi(net.n_agents, net.edge_prob, net.seed))
    report = validate(model)
    if not report.ok:
        raise ValueError("invalid network: " + "; ".join(report.failures()))
    return model


def build_geometry(cfg: ExperimentConfig) -> BregmanGeometry:
    a = cfg.algorithm
    if a.feasible_set == "box":
        return BregmanGeometry(a.geometry, "box", a.lower, a.upper)
    return BregmanGeometry(a.geometry, a.feasible_set)


def build_schedule(cfg: ExperimentConfig) -> StepsizeSchedule:
    a, N = cfg.algorithm, cfg.network.n_agents
    if a.stepsize == "constant":
        return StepsizeSchedule.constant(a.alpha, N)
    return StepsizeSchedule.diminishing(a.alpha, a.exponent, N)


def reference_key(cfg: ExperimentConfig, oracle: StochasticOracle) -> str:
    p = cfg.problem
    arrays = []
    if hasattr(oracle, "q"):
        arrays = [oracle.q, oracle.b]
    elif hasattr(oracle, "targets"):
        arrays = [oracle.targets]
    desc = {"oracle": oracle.describe(), "iterations": cfg.metrics.reference_iterations, "kind": p.kind}
    return problem_hash(desc, *arrays)


def solve_reference(cfg: ExperimentConfig, oracle: StochasticOracle, cache_dir) -> ReferenceSolution:
    if isinstance(oracle, ZeroOracle):
        return ReferenceSolution(np.zeros(oracle.n), 0.0, 0, 0.0, 0.0, {"closed_form": True})
    return cached_reference(oracle, cache_dir, reference_key(cfg, oracle), cfg.metrics.reference_iterations)


def seed_sequences(cfg: ExperimentConfig):
    return derive_seeds(cfg.algorithm.seed, cfg.metrics.seeds)


def make_simulation(cfg: ExperimentConfig, B: int, seed, network, oracle, f_ref, **engine_kw) -> Simulation:
    a = cfg.algorithm
    econf = EngineConfig(variant=a.variant, formulation=a.formulation, horizon=cfg.horizon(B), seed=seed,
                         eval_every=cfg.eval_every(B), track_agent_costs=cfg.metrics.track_agent_costs,
                         **engine_kw)
    return Simulation(econf, network, oracle, BlockPartition.equal(oracle.n, B), build_schedule(cfg),
                      geometries=build_geometry(cfg), p_on=a.p_on, block_probs=list(a.block_probs) or None,
                      initial=a.initial, f_ref=f_ref)


def plan(cfg: ExperimentConfig) -> dict:
    """What :func:`run_experiment` would do, without simulating."""
    runs = [{"B": B, "rounds": cfg.horizon(B), "eval_every": cfg.eval_every(B)} for B in cfg.algorithm.blocks]
    return {
        "problem": cfg.problem.kind,
        "n": cfg.problem.n,
        "agents": cfg.network.n_agents,
        "variant": cfg.algorithm.variant,
        "formulation": cfg.algorithm.formulation,
        "seeds": cfg.metrics.seeds,
        "runs": runs,
        "total_rounds": cfg.metrics.seeds * sum(r["rounds"] for r in runs),
    }


def plateau(values, fraction: float = PLATEAU_FRACTION) -> float:
    """Mean of the last ``fraction`` of a curve."""
    v = np.asarray(values, dtype=np.float64)
    k = max(1, int(math.ceil(fraction * v.size)))
    return float(v[-k:].mean())


@dataclass
class ExperimentResult:
    summary: dict
    output_dir: Path
    means: dict[int, dict[str, np.ndarray]]


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Run every block count for every seed and write the artifacts.

    Seeds may run on ``threads`` worker threads; each run owns its random
    streams and files are written afterwards in a fixed order, so the output
    does not depend on ``threads``.
    """
    cfg.validate()
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.toml").write_text(dump_config(cfg), encoding="utf-8")

    oracle = build_oracle(cfg)
    network = build_network(cfg)
    ref = solve_reference(cfg, oracle, out / "reference")
    seeds = seed_sequences(cfg)
    jobs = [(B, k) for B in cfg.algorithm.blocks for k in range(len(seeds))]

    def work(job):
        B, k = job
        sim = make_simulation(cfg, B, seeds[k], network, oracle, ref.f)
        trace = sim.run()
        log.info("B=%d seed=%d done: f(xbar)=%.6g", B, k, trace.f_xbar[-1])
        return trace

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            traces = list(pool.map(work, jobs))
    else:
        traces = [work(j) for j in jobs]
    by_job = dict(zip(jobs, traces))

    width = len(str(len(seeds) - 1))
    means: dict[int, dict[str, np.ndarray]] = {}
    per_block = {}
    comparison = {k: [] for k in ("B", "t", "t_over_B", "cost_error", "f_best_error", "consensus_mean",
                                  "consensus_max")}
    for B in cfg.algorithm.blocks:
        trs = [by_job[(B, k)] for k in range(len(seeds))]
        for k, tr in enumerate(trs):
            write_columns_csv(tr.columns(), out / f"trace_B{B}_seed{k:0{width}d}.csv")
        mean = average_columns(trs)
        means[B] = mean
        write_columns_csv(mean, out / f"mean_B{B}.csv")
        for key in comparison:
            comparison[key].append(np.full(mean["t"].size, float(B)) if key == "B" else mean[key])
        per_block[str(B)] = {
            "rounds": cfg.horizon(B),
            "final_cost_error": float(mean["cost_error"][-1]),
            "final_f_best_error": float(mean["f_best_error"][-1]),
            "plateau_cost_error": plateau(mean["cost_error"]),
            "final_consensus_mean": float(mean["consensus_mean"][-1]),
            "final_consensus_max": float(mean["consensus_max"][-1]),
            "plateau_consensus_mean": plateau(mean["consensus_mean"]),
            "broadcast_floats": int(mean["broadcast_floats"][-1]),
            "step_bound_violations": int(sum(tr.step_bound_violations for tr in trs)),
            "max_step_ratio": float(max(tr.max_step_ratio for tr in trs)),
        }
    if len(cfg.algorithm.blocks) > 1:
        write_columns_csv({k: np.concatenate(v) for k, v in comparison.items()}, out / "comparison.csv")
    plateaus = [v["plateau_cost_error"] for v in per_block.values()]
    summary = {
        "plan": plan(cfg),
        "reference": {"f": ref.f, "tolerance": ref.tolerance, "iterations": ref.iterations,
                      "step_scale": ref.step_scale},
        "blocks": per_block,
        "plateau_ratio": max(plateaus) / min(plateaus) if min(plateaus) > 0 else math.inf,
        "step_bound_violations": int(sum(v["step_bound_violations"] for v in per_block.values())),
    }
    write_summary_json(summary, out / "summary.json")
    return ExperimentResult(summary, out, means)
