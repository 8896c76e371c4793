import numpy as np
import pytest

from dbpm.blockcore import BlockPartition
from dbpm.geometry import BregmanGeometry
from dbpm.graph import NetworkModel, metropolis_hastings_weights
from dbpm.metrics import (RunTrace, average_columns, block_spreads, bound_curves, consensus_error, consensus_errors,
                          estimate_contraction, expected_block_matrix, fraction_below, lyapunov, read_columns_csv,
                          second_eigenvalue_modulus, write_columns_csv, write_summary_json)
from dbpm.problems import ZeroOracle
from dbpm.verify import check_consensus_matrices, check_spread_contraction


def ring(n):
    adj = np.zeros((n, n), dtype=bool)
    for i in range(n):
        adj[i, (i + 1) % n] = adj[(i + 1) % n, i] = True
    return metropolis_hastings_weights(adj)


def test_consensus_error_examples():
    X = np.array([[1.0, 1.0], [3.0, 1.0]])
    np.testing.assert_allclose(consensus_errors(X), [1.0, 1.0])
    assert not np.any(consensus_errors(np.tile([2.0, -1.0], (4, 1))))


def test_trace_records_and_indexes():
    part = BlockPartition((1, 1))
    tr = RunTrace(2, part, f_ref=0.0)
    X = np.array([[1.0, 0.0], [3.0, 0.0]])
    tr.record(0, X, ZeroOracle(2, 2), 0)
    np.testing.assert_allclose(consensus_error(tr, 0), [1.0, 1.0])
    with pytest.raises(KeyError):
        consensus_error(tr, 5)
    cols = tr.columns()
    assert cols["spread_b0"][0] == 2.0 and cols["spread_b1"][0] == 0.0
    assert np.isnan(cols["mean_agent_cost"][0])


def test_block_spreads():
    X = np.array([[0.0, 1.0, 5.0], [2.0, 1.0, 4.0]])
    assert block_spreads(X, BlockPartition((1, 2))).tolist() == [2.0, 1.0]


def test_average_columns_requires_shared_rounds():
    part = BlockPartition((1,))
    a, b = RunTrace(1, part), RunTrace(1, part)
    a.record(0, np.zeros((1, 1)), ZeroOracle(1, 1), 0)
    b.record(1, np.zeros((1, 1)), ZeroOracle(1, 1), 0)
    with pytest.raises(ValueError):
        average_columns([a, b])


def test_csv_round_trip(tmp_path):
    cols = {"t": np.array([0.0, 10.0]), "v": np.array([0.1, np.nan])}
    write_columns_csv(cols, tmp_path / "c.csv")
    back = read_columns_csv(tmp_path / "c.csv")
    assert back["t"].tolist() == [0.0, 10.0]
    assert back["v"][0] == 0.1 and np.isnan(back["v"][1])
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "t,v"


def test_summary_json_nonfinite(tmp_path):
    write_summary_json({"a": float("inf"), "b": np.float64(2.0), "c": (1, 2)}, tmp_path / "s.json")
    text = (tmp_path / "s.json").read_text()
    assert '"a": null' in text and '"b": 2.0' in text


def test_ring_contraction_matches_eigenvalue():
    net = ring(5)
    est = estimate_contraction(net, np.ones((5, 1)), trials=200, horizon=60, seed=0)
    lam2 = second_eigenvalue_modulus(expected_block_matrix(net.weights, np.ones(5)))
    assert abs(est.mu - lam2) <= 0.05
    assert est.M > 0


def test_one_step_consensus_gets_floor():
    W = np.full((3, 3), 1 / 3)
    est = estimate_contraction(NetworkModel.from_weights(W), np.ones((3, 1)), trials=5, horizon=10)
    assert est.one_step and est.mu == 1e-12


def test_lyapunov_zero_at_reference():
    part = BlockPartition((1, 1))
    X = np.tile([0.3, -0.2], (4, 1))
    assert lyapunov(X, part, BregmanGeometry(), 0.5, [0.3, -0.2]) == 0
    assert lyapunov(X, part, BregmanGeometry(), 0.5, [0.3, 0.8]) == pytest.approx(4 * 0.5 / 0.5)


def test_bound_curves_shape_and_limits():
    rep = bound_curves(0.1, 0.1, 2, 1.0, 1.0, 1.0, 0.5, 1.0, C=1.0, V0=1.0, horizon=1000)
    assert rep.consensus_bound[0] == 1.0
    assert rep.consensus_bound[-1] == pytest.approx(rep.S_bar, rel=1e-9)
    assert rep.rate_bound[-1] == pytest.approx(rep.S + rep.Q / 1001, rel=1e-9)
    with pytest.raises(ValueError):
        bound_curves(0.1, 0.1, 2, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    assert fraction_below([1, 2, 3], [2, 2, 2]) == pytest.approx(2 / 3)


def test_consensus_matrix_checks_quick():
    for c in check_consensus_matrices(2000):
        assert c.ok or c.name == "mean_selection", c.detail


def test_spread_contraction_quick():
    c = check_spread_contraction(rounds=1000)
    assert c.ok, c.detail
