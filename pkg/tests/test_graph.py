import numpy as np
import pytest

from dbpm.graph import (GraphError, NetworkModel, erdos_renyi, load_weights_csv, metropolis_hastings_weights,
                        save_weights_csv, validate)


def test_two_nodes_complete():
    adj = erdos_renyi(2, 1.0, 0)
    assert adj.tolist() == [[False, True], [True, False]]


def test_er_is_connected_and_deterministic():
    a = erdos_renyi(48, 0.3, 7)
    b = erdos_renyi(48, 0.3, 7)
    assert np.array_equal(a, b)
    assert np.array_equal(a, a.T)
    assert validate(metropolis_hastings_weights(a)).strongly_connected


def test_er_gives_up_on_empty_graph():
    with pytest.raises(GraphError, match="1000 attempts"):
        erdos_renyi(5, 0.0, 0)


def test_er_rejects_bad_parameters():
    with pytest.raises(GraphError):
        erdos_renyi(1, 0.5, 0)
    with pytest.raises(GraphError):
        erdos_renyi(4, 1.5, 0)


def test_mh_two_nodes():
    m = metropolis_hastings_weights(np.array([[0, 1], [1, 0]], dtype=bool))
    assert np.array_equal(m.weights, [[0.5, 0.5], [0.5, 0.5]])


def test_mh_star():
    adj = np.zeros((3, 3), dtype=bool)
    adj[0, 1:] = adj[1:, 0] = True
    w = metropolis_hastings_weights(adj).weights
    np.testing.assert_allclose(w[0], [1 / 3, 1 / 3, 1 / 3], atol=1e-15)
    np.testing.assert_allclose(w[1], [1 / 3, 2 / 3, 0], atol=1e-15)
    np.testing.assert_allclose(w.sum(axis=0), 1, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_mh_doubly_stochastic_symmetric(seed):
    m = metropolis_hastings_weights(erdos_renyi(20, 0.25, seed))
    w = m.weights
    assert np.max(np.abs(w.sum(axis=0) - 1)) <= 1e-12
    assert np.max(np.abs(w.sum(axis=1) - 1)) <= 1e-12
    assert np.array_equal(w, w.T)
    rep = validate(m)
    assert rep.ok and rep.eta == w[w > 0].min()


def test_mh_rejects_disconnected():
    adj = np.zeros((4, 4), dtype=bool)
    adj[0, 1] = adj[1, 0] = adj[2, 3] = adj[3, 2] = True
    with pytest.raises(GraphError):
        metropolis_hastings_weights(adj)


def test_validate_flags_row_only_stochastic():
    w = np.array([[0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [0.0, 0.5, 0.5]])
    w[1] = [0.9, 0.1, 0.0]
    rep = validate(NetworkModel.from_weights(w))
    assert rep.row_stochastic and not rep.column_stochastic and not rep.ok


def test_validate_flags_unreachable_node():
    w = np.array([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0]])
    rep = validate(NetworkModel.from_weights(w))
    assert not rep.strongly_connected
    assert "strong connectivity" in rep.failures()


def test_neighbor_lists_include_self():
    m = metropolis_hastings_weights(erdos_renyi(6, 0.5, 3))
    for i in range(6):
        assert i in m.in_neighbors[i] and i in m.out_neighbors[i]
        assert list(m.in_neighbors[i]) == sorted(np.flatnonzero(m.weights[i] > 0))


def test_weights_csv_round_trip(tmp_path):
    m = metropolis_hastings_weights(erdos_renyi(7, 0.5, 1))
    save_weights_csv(m, tmp_path / "w.csv")
    back = load_weights_csv(tmp_path / "w.csv")
    assert np.array_equal(back.weights, m.weights)
    assert np.array_equal(back.adjacency, m.adjacency)
