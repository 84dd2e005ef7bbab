"""Tests for the Kiefer-Wolfowitz optimiser and the TORA stage machine."""
import functools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kwcsma.kw import (
    ITERATE_MARGIN,
    KwState,
    Phase,
    ToraState,
    kw_maximize,
    kw_new,
    kw_probe,
    kw_report,
    log_domain,
    tora_new,
    tora_step,
)
from kwcsma.model import PhyMacConfig, optimal_p, rr_tau, system_throughput

B2 = 2 ** (-1 / 3)


class TestKwBasics:
    def test_new_and_first_probe(self):
        s = kw_new(0.5, 0, 0.9)
        assert s.k == 2 and s.phase is Phase.PLUS
        assert kw_probe(s) == 0.9
        assert kw_probe(kw_new(0.1, 0, 1)) == pytest.approx(0.1 + B2)
        assert kw_probe(kw_new(0.1, 0, 1)) == pytest.approx(0.8937, abs=1e-4)

    @pytest.mark.parametrize("args", [(0.5, 1, 1), (0.5, 1, 0), (2.0, 0, 1)])
    def test_bad_bounds(self, args):
        with pytest.raises(ValueError):
            kw_new(*args)

    def test_gains(self):
        s = KwState(k=1000, p_val=0.5, phase=Phase.PLUS, lo=0, hi=1)
        assert s.a_k == pytest.approx(1e-3)
        assert s.b_k == pytest.approx(0.1)

    def test_probe_examples(self):
        s = KwState(k=1000, p_val=0.5, phase=Phase.PLUS, lo=0, hi=1)
        assert kw_probe(s) == pytest.approx(0.6)
        m = KwState(k=1000, p_val=0.05, phase=Phase.MINUS, lo=0, hi=1)
        assert kw_probe(m) == 0.0
        s2 = KwState(k=50, p_val=0.4, phase=Phase.PLUS, lo=0, hi=1)
        minus = KwState(k=50, p_val=0.4, phase=Phase.MINUS, lo=0, hi=1)
        assert kw_probe(s2) - 0.4 == pytest.approx(0.4 - kw_probe(minus))
        assert kw_probe(s2) == kw_probe(s2)  # pure

    def test_report_equal_measurements(self):
        s = kw_report(kw_new(0.3, 0, 1), 0.7)
        assert s.phase is Phase.MINUS and s.s_plus == 0.7 and s.k == 2
        s = kw_report(s, 0.7)
        assert s.p_val == pytest.approx(0.3) and s.k == 3 and s.phase is Phase.PLUS

    def test_report_update_arithmetic(self):
        s = kw_report(kw_report(kw_new(0.5, 0, 1), 0.20), 0.18)
        assert s.p_val == pytest.approx(0.5 + 0.5 * 0.02 / B2)

    def test_raw_bits_update_is_clamped(self):
        s = kw_report(kw_report(kw_new(0.5, 0, 0.9), 10e6), 8e6)
        raw = 0.5 + 0.5 * 2e6 / B2
        assert raw > 1e6
        assert s.p_val == pytest.approx(0.9 - ITERATE_MARGIN)

    def test_no_advance(self):
        s = kw_report(kw_report(kw_new(0.5, 0, 1), 1.0), 0.0, advance=False)
        assert s.k == 2

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            kw_report(kw_new(0.5, 0, 1), float("nan"))

    def test_gain_conditions(self):
        k = np.arange(2, 2_000_000, dtype=float)
        a, b = 1 / k, k ** (-1 / 3)
        # tail sums of k^{-4/3} converge, while the harmonic sum keeps growing
        assert np.sum(a * b) < 3.0 and np.sum((a / b) ** 2) < 3.0
        assert np.sum(a) > 14


class TestKwProperties:
    @settings(max_examples=40, deadline=None)
    @given(
        seed=st.integers(0, 2**31),
        lo=st.floats(-2, 0.4),
        width=st.floats(0.01, 3),
        scale=st.floats(1e-3, 1e3),
    )
    def test_probes_never_leave_bounds(self, seed, lo, width, scale):
        hi = lo + width
        rng = np.random.default_rng(seed)
        s = kw_new(lo + width * rng.uniform(), lo, hi)
        for _ in range(200):
            x = kw_probe(s)
            assert lo <= x <= hi
            s = kw_report(s, scale * rng.normal())
            assert lo <= s.p_val <= hi and s.k >= 2

    def test_quadratic_converges(self):
        run = kw_maximize(lambda p: -((p - 0.3) ** 2), 0.5, 0.0, 1.0, 5000)
        assert abs(run.p - 0.3) < 1e-2

    def test_log_domain(self):
        s = log_domain(0.1, 1e-4, 0.9)
        assert math.exp(s.p_val) == pytest.approx(0.1)
        with pytest.raises(ValueError):
            log_domain(0.1, 0.0, 0.9)
        run = kw_maximize(lambda p: p * math.exp(-20 * p), 0.1, 1e-4, 0.9, 2000, log=True)
        assert run.p == pytest.approx(0.05, rel=0.02)
        assert np.all((run.probes >= 1e-4 - 1e-15) & (run.probes <= 0.9 + 1e-15))

    def test_surrogate_convergence(self):
        cfg = PhyMacConfig()
        W = np.ones(10)
        p_star = optimal_p(W, cfg).p
        peak = system_throughput(p_star, W, cfg) / cfg.rate_bps
        for seed in range(3):
            rng = np.random.default_rng(seed)
            f = lambda p: system_throughput(p, W, cfg) / cfg.rate_bps + rng.uniform(-1, 1) * 0.03 * peak
            assert abs(kw_maximize(f, 0.1, 1e-4, 0.9, 2000, log=True).p - p_star) <= 0.1 * p_star


class TestTora:
    def _after(self, p_val, j, k=10):
        return ToraState(KwState(k=k, p_val=p_val, phase=Phase.PLUS, lo=0, hi=1), j)

    def test_jump_up(self):
        s = tora_step(self._after(0.03, 2), 7)
        assert s.stage_j == 3 and s.kw.p_val == 0.5 and s.kw.k == 10

    def test_no_jump_at_stage_zero(self):
        s = tora_step(self._after(0.97, 0), 7)
        assert s.stage_j == 0 and s.kw.k == 11 and s.kw.p_val == 0.97

    def test_jump_down(self):
        s = tora_step(self._after(0.97, 3), 7)
        assert s.stage_j == 2 and s.kw.p_val == 0.5 and s.kw.k == 10

    def test_plain_increment(self):
        s = tora_step(self._after(0.5, 3), 7)
        assert s.stage_j == 3 and s.kw.k == 11

    def test_top_stage_stays(self):
        s = tora_step(self._after(0.01, 6), 7)
        assert s.stage_j == 6 and s.kw.k == 11

    def test_validation(self):
        with pytest.raises(ValueError):
            ToraState(kw_new(0.5, 0, 1), 0, 0.6, 0.5)
        with pytest.raises(ValueError):
            ToraState(kw_new(0.5, 0, 1), -1)
        t = tora_new(7)
        assert t.stage_j == 0 and t.kw.p_val == 0.5 and t.kw.hi == 1.0

    def test_stage_climbs_to_bracket(self):
        cfg = PhyMacConfig()
        N, m = 40, cfg.m_stages
        tau = functools.lru_cache(None)(lambda j, p0: rr_tau(j, p0, N, cfg))
        p_target = 0.003
        assert p_target < tau(0, 0.0)
        # surrogate peaked at attempt probability p_target; quasi-concave in p0 because tau is monotone
        surrogate = lambda j, p0: -((math.log(tau(j, round(p0, 3))) - math.log(p_target)) ** 2)
        s = tora_new(m)
        stages = [0]
        for _ in range(2000):
            if tau(s.stage_j, 0.0) <= p_target <= tau(s.stage_j, 1.0):
                break
            kw = kw_report(s.kw, surrogate(s.stage_j, kw_probe(s.kw)))
            kw = kw_report(kw, surrogate(s.stage_j, kw_probe(kw)), advance=False)
            s = tora_step(ToraState(kw, s.stage_j), m)
            stages.append(s.stage_j)
        assert tau(s.stage_j, 0.0) <= p_target <= tau(s.stage_j, 1.0)
        assert s.stage_j > 0 and np.all(np.diff(stages) >= 0)
