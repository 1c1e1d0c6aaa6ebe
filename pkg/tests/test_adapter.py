import math

import pytest
from hypothesis import given, settings, strategies as st

from rccs.adapter import AdapterState, MissTracker, adapter_update, quantize


def _adapter(**kw):
    return AdapterState(**kw)


def test_ema_arithmetic_example():
    a = _adapter()
    a.rho = 0.1
    a.update(0.2)
    assert a.rho == pytest.approx(0.11)


def test_quantize_examples():
    assert quantize(0.044, 0.01, 0.01, 0.1) == pytest.approx(0.05)
    assert quantize(0.031, 0.01, 0.01, 0.1) == pytest.approx(0.04)
    assert quantize(0.095, 0.005, 0.03, 0.1) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        quantize(0.05, 0.0, 0.03, 0.1)


def test_quantize_limits():
    assert quantize(0.0, 0.005, 0.03, 0.1) == pytest.approx(0.03)
    assert quantize(1.0, 0.005, 0.03, 0.1) == pytest.approx(0.1)


def test_period_reaches_fastest_rate():
    a = _adapter()
    for _ in range(10_000):
        a.update(0.0)
    assert a.period() == pytest.approx(a.h_min)


def test_zero_loss_fixed_point():
    # at the shortest period with zero loss, the period stays put
    a = _adapter(h_c=0.03 - 0.005)
    a.rho = 0.0
    a.e = a.e_prev = a.e_prev2 = a.rho_r
    before = a.period()
    for _ in range(200):
        a.update(0.0)
    assert a.period() == before == pytest.approx(a.h_min)


def test_step_response_reaches_slowest_within_15s():
    # loss step 0 -> 0.5: updates arrive every h_f seconds
    a = _adapter(h_c=0.03 - 0.005)
    a.rho = 0.0
    a.e = a.e_prev = a.e_prev2 = a.rho_r
    t = 0.0
    while a.period() < a.h_max - 1e-12:
        a.update(0.5)
        t += a.h_f
        assert t <= 15.0, f"period still {a.period()} after {t} s"
    assert t <= 15.0


def test_monotone_pressure():
    # persistent loss above the target never speeds the loop up
    a = _adapter(h_c=0.05)
    prev = a.h_c
    for _ in range(100):
        a.update(0.4)
        assert a.h_c >= prev - 1e-15
        prev = a.h_c


def test_slew_limit_bounds_step():
    a = _adapter(h_c=0.05)
    for l in (1.0, 0.0, 1.0, 1.0, 0.0):
        before = a.h_c
        a.update(l)
        assert abs(a.h_c - before) <= a.h_q + 1e-15


@given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1,
                max_size=300))
@settings(max_examples=50, deadline=None)
def test_period_always_in_range(losses):
    a = _adapter()
    for l in losses:
        h_c = adapter_update(a, l)
        assert a.h_min - a.h_q - 1e-12 <= h_c <= a.h_max + 1e-12
        h_d = a.period()
        assert a.h_min - 1e-12 <= h_d <= a.h_max + 1e-12
        # the published period sits on the base-tick grid
        assert abs(h_d / a.h_q - round(h_d / a.h_q)) < 1e-9


def test_miss_tracker_window():
    tr = MissTracker(4)
    assert tr.miss_ratio() == 0.0
    for k, hit in enumerate([True, False, False, True]):
        tr.record_tick(k, hit)
    assert tr.miss_ratio() == pytest.approx(0.5)
    tr.record_tick(4, True)     # evicts the oldest (a hit)
    assert tr.miss_ratio() == pytest.approx(0.5)
    tr.record_tick(5, True)     # evicts a miss
    assert tr.miss_ratio() == pytest.approx(0.25)


def test_miss_tracker_rejects_duplicate_ticks():
    tr = MissTracker(4)
    tr.record_tick(0, True)
    with pytest.raises(ValueError):
        tr.record_tick(0, False)
    with pytest.raises(ValueError):
        MissTracker(0)
