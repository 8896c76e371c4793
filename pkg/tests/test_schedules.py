import numpy as np
import pytest

from dbpm.schedules import StepsizeSchedule, envelope, stepsize


def test_constant():
    s = StepsizeSchedule.constant(0.2, 3)
    assert stepsize(s, 1, 0) == 0.2 and stepsize(s, 2, 10**6) == 0.2


def test_diminishing_harmonic():
    s = StepsizeSchedule.diminishing(1.0, 1.0)
    assert stepsize(s, 0, 0) == 1.0
    assert stepsize(s, 0, 9) == pytest.approx(0.1, abs=1e-15)


def test_power_075_square_summable_not_summable():
    s = StepsizeSchedule.diminishing(1.0, 0.75)
    t = np.arange(10**6)
    a = 1.0 / (t + 1.0) ** 0.75
    sq = np.cumsum(a * a)
    # tail increments of the square sums vanish
    assert sq[-1] - sq[-10**5] < 1e-4 * 10
    assert a[-1] ** 2 < 1e-8
    assert np.sum(a) > 100
    assert stepsize(s, 0, 999_999) == a[-1]


@pytest.mark.parametrize("q", [0.5, 0.3, 1.2])
def test_rejects_exponent_outside_range(q):
    with pytest.raises(ValueError):
        StepsizeSchedule.diminishing(1.0, q)


def test_rejects_nonpositive():
    with pytest.raises(ValueError):
        StepsizeSchedule.constant(0.0)
    with pytest.raises(ValueError):
        StepsizeSchedule.constant([0.1, -0.1], 2)


def test_envelope():
    assert envelope(StepsizeSchedule.constant(0.2, 4), 5) == (0.2, 0.2)
    s = StepsizeSchedule.constant([0.1, 0.3], 2)
    assert envelope(s, 0) == (0.1, 0.3) and envelope(s, 100) == (0.1, 0.3)
    h = StepsizeSchedule.diminishing([0.5, 1.0, 0.7], 0.8, 3)
    for t in (0, 3, 50):
        vals = [stepsize(h, i, t) for i in range(3)]
        assert envelope(h, t) == (min(vals), max(vals))


def test_monotone():
    for s in (StepsizeSchedule.constant([0.1, 0.2], 2), StepsizeSchedule.diminishing([0.4, 1.0], 0.6, 2)):
        prev = s.at(0)
        for t in range(1, 200):
            cur = s.at(t)
            assert np.all(cur <= prev)
            prev = cur


def test_negative_iteration():
    with pytest.raises(ValueError):
        StepsizeSchedule.constant(1.0).at(-1)
