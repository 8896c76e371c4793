import numpy as np
import pytest

from dbpm.blockcore import BlockPartition, BlockVector, spread
from dbpm.engine import (AgentState, EngineConfig, EngineError, Simulation, block_update, consensus_step, mix,
                         neighbor_slots, run, sample_round_randomness)
from dbpm.geometry import BregmanGeometry
from dbpm.graph import erdos_renyi, metropolis_hastings_weights
from dbpm.problems import SeparableQuadraticOracle, ZeroOracle
from dbpm.schedules import StepsizeSchedule
from dbpm.verify import check_b1_reference, check_formulations, simulate


def two_agent_net():
    return metropolis_hastings_weights(np.array([[0, 1], [1, 0]], dtype=bool))


def agent(estimate, copies, part, steps=0.5):
    return AgentState(0, BlockVector(np.asarray(estimate, float), part), copies, [BregmanGeometry()] * part.n_blocks,
                      StepsizeSchedule.constant(steps), 1.0, np.full(part.n_blocks, 1 / part.n_blocks))


def test_consensus_step_example():
    part = BlockPartition((2,))
    a = agent([0.0, 2.0], {1: np.array([4.0, 6.0])}, part)
    assert consensus_step(a, [0.5, 0.5]).data.tolist() == [2.0, 4.0]


def test_consensus_step_rejects_bad_row():
    part = BlockPartition((1,))
    a = agent([0.0], {1: np.array([1.0])}, part)
    with pytest.raises(EngineError):
        consensus_step(a, [0.5, 0.6])


def test_block_update_touches_one_block():
    part = BlockPartition((1, 1))
    a = agent([1.0, 1.0], {}, part)
    oracle = SeparableQuadraticOracle(np.array([[0.0, 0.0]]), 0.0)
    y = BlockVector(np.array([3.0, 5.0]), part)
    out = block_update(a, y, 0, np.zeros(2), 0, oracle)
    # prox on block 0 at y: 3 - 0.5 * (3 - 0); block 1 keeps the old estimate
    assert out.data.tolist() == [1.5, 1.0]
    with pytest.raises(IndexError):
        block_update(a, y, 2, np.zeros(2), 0, oracle)


def test_mix_order_is_neighbor_order(rng):
    net = metropolis_hastings_weights(erdos_renyi(8, 0.5, 2))
    idx, w = neighbor_slots(net)
    X = rng.standard_normal((8, 5))
    rows = np.arange(8)
    np.testing.assert_allclose(mix(rows, idx, w, X, False), net.weights @ X, atol=1e-14)
    np.testing.assert_allclose(mix(rows, idx, w, X, False, slice(1, 3)), (net.weights @ X)[:, 1:3], atol=1e-14)


def test_pure_consensus_fixed_point_and_contraction():
    net = two_agent_net()
    part = BlockPartition((1,))
    cfg = EngineConfig(horizon=1, seed=0, eval_every=1)
    sim = Simulation(cfg, net, ZeroOracle(1, 2), part, StepsizeSchedule.constant(0.1), initial=[[0.0], [2.0]])
    sim.run()
    assert sim.X[:, 0].tolist() == [1.0, 1.0]

    sim = Simulation(EngineConfig(horizon=10, seed=0), net, ZeroOracle(1, 2), part, StepsizeSchedule.constant(0.1),
                     initial=[[1.0], [1.0]])
    sim.run()
    assert np.all(sim.X == 1.0)


def test_spread_never_grows_under_pure_consensus():
    net = metropolis_hastings_weights(erdos_renyi(12, 0.3, 1))
    part = BlockPartition.equal(6, 3)
    sim = Simulation(EngineConfig(horizon=0, seed=4), net, ZeroOracle(6, 12), part, StepsizeSchedule.constant(0.1),
                     p_on=0.6)
    prev = spread(sim.X, axis=0)
    for _ in range(200):
        sim.step()
        cur = spread(sim.X, axis=0)
        assert np.all(cur <= prev + 1e-15)
        prev = cur


def test_sample_round_randomness_needs_stream():
    part = BlockPartition((1,))
    with pytest.raises(EngineError):
        sample_round_randomness(agent([0.0], {}, part), 0)


def test_agent_state_views(quad_bed):
    net, oracle = quad_bed.network, quad_bed.oracle
    sim = Simulation(EngineConfig(horizon=3, seed=1, formulation="copy_table"), net, oracle,
                     BlockPartition.equal(oracle.n, 5), StepsizeSchedule.constant(0.1))
    sim.run()
    states = sim.agent_states()
    W = net.weights
    for st in states:
        y = consensus_step(st, W[st.id])
        np.testing.assert_allclose(y.data, (W @ sim.X)[st.id], atol=1e-14)
        assert st.pi.sum() == pytest.approx(1.0)
        awake, block, sample = sample_round_randomness(st, 3)
        assert 0 <= block < 5


def test_bad_configuration_errors(quad_bed):
    net, oracle = quad_bed.network, quad_bed.oracle
    part = BlockPartition.equal(oracle.n, 2)
    with pytest.raises(ValueError):
        EngineConfig(variant="newton")
    with pytest.raises(ValueError):
        Simulation(EngineConfig(), net, oracle, BlockPartition.equal(oracle.n + 1, 2), StepsizeSchedule.constant(0.1))
    with pytest.raises(ValueError):
        Simulation(EngineConfig(), net, oracle, part, StepsizeSchedule.constant(0.1), p_on=0.0)
    with pytest.raises(ValueError):
        Simulation(EngineConfig(), net, oracle, part, StepsizeSchedule.constant(0.1), block_probs=[0.0, 1.0])
    with pytest.raises(ValueError):
        Simulation(EngineConfig(variant="subgradient"), net, oracle, part, StepsizeSchedule.constant(0.1),
                   geometries=BregmanGeometry("quadratic", "box", -1.0, 1.0))


def test_divergence_is_reported(quad_bed):
    net, oracle = quad_bed.network, quad_bed.oracle
    part = BlockPartition.equal(oracle.n, 1)
    with pytest.raises(EngineError, match="non-finite"):
        run(EngineConfig(horizon=2000, seed=0), net, oracle, part, StepsizeSchedule.constant(1e154))


def test_same_seed_same_trace(quad_bed):
    a = simulate(quad_bed, 5, 300, 7)
    b = simulate(quad_bed, 5, 300, 7)
    assert np.array_equal(a.X, b.X)
    c = simulate(quad_bed, 5, 300, 8)
    assert not np.array_equal(a.X, c.X)


@pytest.mark.parametrize("geom", [BregmanGeometry("quadratic", "box", -0.5, 0.5), BregmanGeometry("entropy", "simplex")])
def test_constrained_runs_stay_feasible(geom):
    net = metropolis_hastings_weights(erdos_renyi(6, 0.5, 0))
    oracle = SeparableQuadraticOracle(np.random.default_rng(0).uniform(-1, 1, (6, 4)), 0.1)
    part = BlockPartition.equal(4, 1 if geom.kind == "entropy" else 2)
    sim = Simulation(EngineConfig(horizon=300, seed=2), net, oracle, part, StepsizeSchedule.constant(0.2),
                     geometries=geom, p_on=0.8)
    sim.run()
    if geom.kind == "entropy":
        np.testing.assert_allclose(sim.X.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(sim.X > 0)
    else:
        assert np.all(np.abs(sim.X) <= 0.5)
    assert sim.step_bound_violations == 0


@pytest.mark.parametrize("variant", ["subgradient", "smooth", "separable"])
def test_variants_converge_on_quadratic(quad_bed, variant):
    sim = simulate(quad_bed, 5, 3000, 0, variant=variant)
    xbar = sim.X.mean(axis=0)
    assert np.linalg.norm(xbar - quad_bed.oracle.optimum) < 0.2
    assert sim.step_bound_violations == 0


def test_b1_reference_quick():
    c = check_b1_reference(2, 200)
    assert c.ok, c.detail


def test_formulations_quick():
    c = check_formulations(2, 200)
    assert c.ok, c.detail


def test_broadcast_accounting(quad_bed):
    sim = simulate(quad_bed, 5, 100, 0, p_on=1.0)
    assert sim.broadcast_floats == 100 * quad_bed.network.n_agents * 2
