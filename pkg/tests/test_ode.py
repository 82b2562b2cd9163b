import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavetrace.ode import dense_eval, dopri5_batch


def oscillator(y):
    return np.stack([y[:, 1], -y[:, 0]], axis=1)


def test_harmonic_oscillator_endpoint():
    res = dopri5_batch(oscillator, [[1.0, 0.0]], 10.0, rtol=1e-11, atol=1e-13)
    assert res.status == ["done"]
    t, y = res.t[0], res.y[0]
    assert t[-1] == 10.0
    np.testing.assert_allclose(y[-1], [np.cos(10.0), -np.sin(10.0)], atol=1e-9)


def test_dense_output_tracks_exact_solution():
    res = dopri5_batch(oscillator, [[1.0, 0.0]], 20.0, rtol=1e-10, atol=1e-12)
    t, dense = res.t[0], res.dense[0]
    worst = 0.0
    for i in range(len(t) - 1):
        for th in (0.25, 0.5, 0.75):
            tt = t[i] + th * (t[i + 1] - t[i])
            worst = max(worst, abs(dense_eval(dense[i], th)[0] - np.cos(tt)))
    assert worst <= 1e-8


def test_rows_are_independent_of_batch_company():
    y0 = np.array([[1.0, 0.0], [0.0, 3.0], [2.0, -1.0]])
    batch = dopri5_batch(oscillator, y0, [5.0, 1.0, 7.0])
    for i in range(3):
        alone = dopri5_batch(oscillator, y0[i:i + 1], [5.0, 1.0, 7.0][i])
        np.testing.assert_array_equal(batch.t[i], alone.t[0])
        np.testing.assert_array_equal(batch.y[i], alone.y[0])


def test_times_strictly_increasing_with_early_finishers():
    # rows leave the batch at different times; the step log must not alias live state
    rng = np.random.default_rng(0)
    y0 = rng.normal(size=(12, 2))
    t_end = rng.uniform(0.5, 20.0, 12)
    res = dopri5_batch(oscillator, y0, t_end, rtol=1e-9)
    for i in range(12):
        t = res.t[i]
        assert np.all(np.diff(t) > 0)
        assert t[-1] == t_end[i]
        # every logged state is on the exact orbit
        r = np.hypot(*y0[i])
        np.testing.assert_allclose(np.hypot(res.y[i][:, 0], res.y[i][:, 1]), r, rtol=1e-7)


@settings(max_examples=20)
@given(st.lists(st.floats(0.1, 30.0), min_size=1, max_size=6))
def test_endpoints_hit_exactly(ends):
    y0 = np.tile([1.0, 0.0], (len(ends), 1))
    res = dopri5_batch(oscillator, y0, ends)
    for t, e in zip(res.t, ends):
        assert t[-1] == e and np.all(np.diff(t) > 0)


def test_event_stops_row():
    res = dopri5_batch(oscillator, [[1.0, 0.0], [2.0, 0.0]], 10.0, event=lambda y: y[:, 0] < -1.5)
    assert res.status == ["done", "event"]
    assert res.t[1][-1] < 10.0


def test_max_steps_status():
    res = dopri5_batch(oscillator, [[1.0, 0.0]], 100.0, max_steps=5)
    assert res.status == ["max_steps"]
    assert len(res.t[0]) == 6


def test_step_failure_on_blowup():
    # y' = y^2 blows up at t = 1
    res = dopri5_batch(lambda y: y * y, [[1.0]], 2.0)
    assert res.status == ["step_failure"]
    assert res.t[0][-1] == pytest.approx(1.0, abs=1e-3)
