import numpy as np
import pytest

from dbpm.rng import AgentStream, as_seed_sequence, derive_seeds, spawn_streams


def test_seed_sequence_copies_are_independent():
    ss = np.random.SeedSequence(5)
    a = as_seed_sequence(ss).spawn(2)
    b = as_seed_sequence(ss).spawn(2)
    assert [c.generate_state(2).tolist() for c in a] == [c.generate_state(2).tolist() for c in b]


def test_streams_reproducible():
    r1, aux1 = spawn_streams(3, 4)
    r2, aux2 = spawn_streams(3, 4)
    for x, y in zip(r1 + [aux1], r2 + [aux2]):
        assert np.array_equal(x.random(5), y.random(5))


def test_derive_seeds_distinct():
    seeds = derive_seeds(0, 3)
    vals = {tuple(s.generate_state(4).tolist()) for s in seeds}
    assert len(vals) == 3


def make_stream(seed=0, chunk=8):
    rng = spawn_streams(seed, 1)[0][0]
    return AgentStream(rng, 0.5, [0.25, 0.75], lambda r, k: r.integers(0, 10, size=k), chunk=chunk)


def test_stream_draws_are_chunk_stable():
    a = make_stream()
    draws = [a.draw(t) for t in range(30)]
    b = make_stream()
    assert [b.draw(t) for t in range(30)] == draws


def test_stream_rejects_out_of_order():
    s = make_stream()
    s.draw(0)
    with pytest.raises(ValueError):
        s.draw(20)
    with pytest.raises(ValueError):
        make_stream().draw(3)
