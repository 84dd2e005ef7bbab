"""Tests for topology construction, node strategies and the event-driven simulator."""
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kwcsma.model import PhyMacConfig, derive_timing, optimal_p, station_throughputs, system_throughput, weight_map
from kwcsma.sim.engine import run_sim, validate_schedule
from kwcsma.sim.report import jain_index, report_metrics
from kwcsma.sim.strategies import (
    NEVER,
    IdleSense,
    PPersistent,
    RandomReset,
    StdDcf,
    StrategySpec,
    ToraNode,
    WtopNode,
    geometric_backoff,
    make_strategy,
)
from kwcsma.sim.topology import Topology, build_topology, place_disc, place_ring

CFG = PhyMacConfig()
M = CFG.m_stages
SEC = 1_000_000_000
T_S = derive_timing(CFG).t_s_ns
CEILING = CFG.payload_bits * 1e9 / T_S  # E_P / T_s


def ring(n, radius=8.0):
    return build_topology(place_ring(n, radius), 24.0, 16.0)


# Seed found by search and pinned: disc(20 m), N=40 with many hidden pairs.
PINNED_DISC_SEED = 0


class TestTopology:
    def test_ring_of_four(self):
        pos = place_ring(4, 8.0)
        np.testing.assert_allclose(pos, [[8, 0], [0, 8], [-8, 0], [0, -8]], atol=1e-12)
        np.testing.assert_allclose(np.hypot(*pos.T), 8.0)

    def test_single_point(self):
        assert place_ring(1, 8.0).shape == (1, 2)

    @pytest.mark.parametrize("n", [2, 10, 40])
    def test_ring_fully_connected(self, n):
        t = ring(n)
        assert t.hidden_pairs == 0 and t.fully_connected
        assert all(len(s) == n for s in t.sense_sets)

    @pytest.mark.parametrize("seed", range(5))
    def test_small_disc_never_hidden(self, seed):
        assert build_topology(place_disc(40, 8.0, seed), 24.0, 16.0).hidden_pairs == 0

    def test_disc_deterministic_and_inside(self):
        a, b = place_disc(50, 20.0, 7), place_disc(50, 20.0, 7)
        np.testing.assert_array_equal(a, b)
        assert np.all(np.hypot(*a.T) <= 20.0)
        assert not np.array_equal(a, place_disc(50, 20.0, 8))

    def test_disc_is_area_uniform(self):
        r = np.hypot(*place_disc(20000, 1.0, 3).T)
        # P(r <= 1/2) = 1/4 for an area-uniform disc
        assert abs(np.mean(r <= 0.5) - 0.25) < 0.01

    def test_pinned_disc_has_hidden_pairs(self):
        t = build_topology(place_disc(40, 20.0, PINNED_DISC_SEED), 24.0, 20.0)
        assert t.hidden_pairs >= 1

    def test_two_far_nodes_hidden(self):
        t = build_topology([[16.0, 0.0], [-14.0, 0.0]], 24.0, 16.0)
        assert t.hidden_pairs == 1
        assert t.sense_sets == (frozenset({0}), frozenset({1}))

    def test_node_outside_tx_range_rejected(self):
        with pytest.raises(ValueError, match="node 1"):
            build_topology([[1.0, 0.0], [25.0, 0.0]], 24.0, 16.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            build_topology(np.zeros((0, 2)), 24.0, 16.0)

    @settings(max_examples=50)
    @given(st.integers(1, 30), st.integers(0, 2**31 - 1), st.floats(5.0, 40.0))
    def test_sense_symmetry(self, n, seed, sense):
        t = build_topology(place_disc(n, 16.0, seed), sense, 16.0)
        for i, s in enumerate(t.sense_sets):
            assert i in s
            for j in s:
                assert i in t.sense_sets[j]
        pairs = sum(j not in t.sense_sets[i] for i in range(n) for j in range(i + 1, n))
        assert pairs == t.hidden_pairs

    def test_json_roundtrip(self):
        t = build_topology(place_disc(12, 20.0, 4), 24.0, 20.0)
        d = Topology.from_dict(t.to_dict())
        np.testing.assert_allclose(d.positions, t.positions)
        assert d.sense_sets == t.sense_sets and d.hidden_pairs == t.hidden_pairs


class TestStrategies:
    def test_stddcf_stage_saturates(self):
        s = StdDcf(CFG)
        for _ in range(M + 3):
            s.on_failure(None)
        assert s.stage == M and s.cw == CFG.cw_max
        s.on_success(None, None)
        assert s.stage == 0 and s.cw == CFG.cw_min

    def test_stddcf_uniform_counter(self):
        rng = random.Random(1)
        s = StdDcf(CFG)
        draws = np.array([s.draw_backoff(rng) for _ in range(40000)])
        assert draws.min() == 0 and draws.max() == CFG.cw_min - 1
        counts = np.bincount(draws, minlength=CFG.cw_min)
        expected = len(draws) / CFG.cw_min
        assert np.sum((counts - expected) ** 2 / expected) < 24.3  # chi2(7) 0.999 quantile

    def test_random_reset_p0_one(self):
        rng = random.Random(2)
        s = RandomReset(CFG, 3, 1.0)
        for _ in range(200):
            s.on_failure(rng)
            s.on_success(None, rng)
            assert s.stage == 3

    def test_random_reset_p0_zero_uniform_above_j(self):
        rng = random.Random(3)
        j = 2
        s = RandomReset(CFG, j, 0.0)
        n = 100_000
        stages = np.empty(n, dtype=int)
        for k in range(n):
            s.on_success(None, rng)
            stages[k] = s.stage
        assert stages.min() == j + 1 and stages.max() == M
        counts = np.bincount(stages, minlength=M + 1)[j + 1:]
        expected = n / (M - j)
        sigma = math.sqrt(n * (1 / (M - j)) * (1 - 1 / (M - j)))
        assert np.all(np.abs(counts - expected) < 3 * sigma)
        assert np.sum((counts - expected) ** 2 / expected) < 18.5  # chi2(4) 0.999 quantile

    def test_random_reset_rejects_stage_m(self):
        with pytest.raises(ValueError):
            RandomReset(CFG, M, 0.5)

    def test_tora_node_follows_payload(self):
        rng = random.Random(0)
        s = ToraNode(CFG)
        assert s.attempt_prob == pytest.approx(2 / CFG.cw_min)
        s.on_success((1.0, 4), rng)
        assert s.stage == 4 and s.attempt_prob == pytest.approx(2 / (CFG.cw_min << 4))

    def test_ppersistent_geometric_backoff_mean(self):
        rng = random.Random(4)
        p = 0.05
        draws = np.array([geometric_backoff(p, rng) for _ in range(50000)])
        assert draws.mean() == pytest.approx((1 - p) / p, rel=0.03)
        assert geometric_backoff(1.0, rng) == 0
        assert geometric_backoff(0.0, rng) == NEVER

    def test_slot_interface(self):
        rng = random.Random(5)
        s = PPersistent(CFG, 0.2)
        assert np.mean([s.on_slot_boundary(rng) for _ in range(20000)]) == pytest.approx(0.2, abs=0.01)
        d = StdDcf(CFG)
        decisions = [d.on_slot_boundary(rng) for _ in range(8000)]
        # mean counter (CW-1)/2 -> one attempt every (CW+1)/2 slots
        assert np.mean(decisions) == pytest.approx(2 / (CFG.cw_min + 1), rel=0.05)

    def test_idle_sense_aimd(self):
        s = IdleSense(CFG, target=3.1)
        p = s.p
        assert p == pytest.approx(2 / CFG.cw_min)
        assert s.on_idle_window(1.0) and s.p == pytest.approx(0.9 * p)
        assert s.on_idle_window(5.0) and s.p == pytest.approx(0.9 * p + 0.001)
        assert not s.on_idle_window(3.1)

    def test_wtop_node_weight_map(self):
        s = WtopNode(CFG, weight=2.0)
        assert s.attempt_prob == 0.1
        assert s.on_broadcast(0.04)
        assert s.attempt_prob == pytest.approx(weight_map(0.04, 2.0))
        assert not s.on_broadcast(0.04)

    @pytest.mark.parametrize("spec,cls", [
        (StrategySpec.ppersistent(0.1), PPersistent),
        (StrategySpec.std_dcf(), StdDcf),
        (StrategySpec.random_reset(1, 0.5), RandomReset),
        (StrategySpec.idle_sense(), IdleSense),
        (StrategySpec.wtop(2.0), WtopNode),
        (StrategySpec.tora(), ToraNode),
    ])
    def test_make_strategy(self, spec, cls):
        assert type(make_strategy(spec, CFG)) is cls

    @pytest.mark.parametrize("kw", [dict(kind="aloha"), dict(kind="ppersistent", p=1.5),
                                    dict(kind="wtop", weight=0.0), dict(kind="idlesense", decrease=1.2)])
    def test_invalid_spec(self, kw):
        with pytest.raises(ValueError):
            StrategySpec(**kw)


class TestEngine:
    def test_single_node_hits_ceiling(self):
        rep = run_sim(ring(1), CFG, StrategySpec.ppersistent(1.0), 2 * SEC, 0)
        assert rep.total_throughput_bps == pytest.approx(CEILING, rel=1e-3)
        assert rep.collisions.sum() == 0

    def test_two_synchronised_nodes_never_succeed(self):
        rep = run_sim(ring(2), CFG, StrategySpec.ppersistent(1.0), SEC, 0)
        assert rep.total_throughput_bps == 0.0
        assert rep.attempts.min() > 100

    def test_rejects_short_duration(self):
        with pytest.raises(ValueError):
            run_sim(ring(2), CFG, StrategySpec.ppersistent(0.1), int(T_S) - 1, 0)

    def test_rejects_spec_count_mismatch(self):
        with pytest.raises(ValueError):
            run_sim(ring(3), CFG, [StrategySpec.std_dcf()] * 2, SEC, 0)

    def test_determinism(self):
        a = run_sim(ring(8), CFG, StrategySpec.std_dcf(), SEC, 42, trace_events=True)
        b = run_sim(ring(8), CFG, StrategySpec.std_dcf(), SEC, 42, trace_events=True)
        assert a.to_dict() == b.to_dict()
        assert a.events == b.events
        np.testing.assert_array_equal(a.window_node_bits, b.window_node_bits)
        c = run_sim(ring(8), CFG, StrategySpec.std_dcf(), SEC, 43)
        assert c.to_dict() != a.to_dict()

    @pytest.mark.parametrize("spec", [StrategySpec.ppersistent(0.05), StrategySpec.std_dcf(),
                                      StrategySpec.idle_sense(), StrategySpec.random_reset(2, 0.3)])
    def test_accounting(self, spec):
        topo = build_topology(place_disc(15, 20.0, 1), 24.0, 20.0)
        rep = run_sim(topo, CFG, spec, 2 * SEC, 5)
        np.testing.assert_array_equal(rep.successes + rep.collisions, rep.attempts)
        np.testing.assert_array_equal(rep.delivered_bits, rep.successes * CFG.payload_bits)
        assert rep.window_node_bits.sum() == rep.delivered_bits.sum()
        m = report_metrics(rep)
        assert m.total_bps == pytest.approx(m.node_bps.sum(), rel=0, abs=0)
        assert m.total_bps == rep.total_throughput_bps
        assert 0 < rep.busy_fraction < 1

    def test_matches_formula_fully_connected(self):
        rep = run_sim(ring(10), CFG, StrategySpec.ppersistent(0.031), 20 * SEC, 1)
        assert rep.total_throughput_bps == pytest.approx(system_throughput(0.031, np.ones(10), CFG), rel=0.05)

    def test_heterogeneous_matches_station_formula(self):
        p = np.array([0.01, 0.02, 0.04, 0.04, 0.08])
        topo = ring(5)
        rep = run_sim(topo, CFG, [StrategySpec.ppersistent(x) for x in p], 60 * SEC, 2)
        np.testing.assert_allclose(rep.node_throughput_bps, station_throughputs(p, CFG), rtol=0.08)

    def test_weight_ratio_in_vivo(self):
        p = 0.02
        specs = [StrategySpec.ppersistent(p)] * 10
        specs[1] = StrategySpec.ppersistent(float(weight_map(p, 3.0)))
        rep = run_sim(ring(10), CFG, specs, 120 * SEC, 7)
        s = rep.node_throughput_bps
        assert s[1] / s[0] == pytest.approx(3.0, rel=0.10)
        assert s[1] / np.delete(s, 1).mean() == pytest.approx(3.0, rel=0.05)

    def test_hidden_pair_harm(self):
        topo = build_topology([[16.0, 0.0], [-16.0, 0.0]], 24.0, 16.0)
        assert topo.hidden_pairs == 1
        rep = run_sim(topo, CFG, StrategySpec.ppersistent(0.5), 10 * SEC, 3)
        assert rep.total_throughput_bps < 0.1 * CEILING

    def test_symmetric_fairness(self):
        rep = run_sim(ring(10), CFG, StrategySpec.ppersistent(0.03), 60 * SEC, 8)
        m = report_metrics(rep)
        assert m.max_rel_spread < 0.10
        assert m.jain > 0.99

    def test_zero_successes_flag_idle_undefined(self):
        rep = run_sim(ring(3), CFG, StrategySpec.ppersistent(0.0), SEC, 0)
        m = report_metrics(rep)
        assert m.total_bps == 0.0 and not m.idle_defined and math.isnan(m.idle_slots)
        assert rep.to_dict()["mean_idle_slots"] is None

    def test_idle_slots_match_geometry(self):
        # N nodes at p: a busy period is followed by Geometric idle slots with mean (1-p)^N / (1-(1-p)^N)
        n, p = 10, 0.02
        rep = run_sim(ring(n), CFG, StrategySpec.ppersistent(p), 30 * SEC, 4)
        q = (1 - p) ** n
        assert rep.mean_idle_slots == pytest.approx(q / (1 - q), rel=0.05)

    def test_event_trace(self):
        rep = run_sim(ring(3), CFG, StrategySpec.std_dcf(), 50_000_000, 1, trace_events=True)
        kinds = {ev.split()[0] for _, _, ev in rep.events}
        assert {"arrive", "tx", "rx_ok", "ack"} <= kinds
        times = [t for t, _, _ in rep.events]
        assert times == sorted(times)
        assert sum(ev == "tx" for _, _, ev in rep.events) >= rep.attempts.sum()


class TestChurn:
    def test_schedule_validation(self):
        with pytest.raises(ValueError):
            validate_schedule([(5, 3)], 5)
        with pytest.raises(ValueError):
            validate_schedule([(0, 3), (0, 4)], 5)
        with pytest.raises(ValueError):
            validate_schedule([(0, 6)], 5)
        assert validate_schedule([(0, 2), (10, 5)], 5) == [(0, 2), (10, 5)]

    def test_departed_nodes_stop_and_accounting_holds(self):
        topo = ring(20)
        sched = [(0, 10), (4 * SEC, 20), (8 * SEC, 10)]
        rep = run_sim(topo, CFG, StrategySpec.ppersistent(0.02), 12 * SEC, 3, schedule=sched)
        np.testing.assert_array_equal(rep.successes + rep.collisions, rep.attempts)
        w = rep.window_node_bits
        assert w[:4, 10:].sum() == 0  # not yet arrived
        assert np.all(w[4:8, 10:].sum(axis=0) > 0)  # all arrivals transmit
        assert w[9:, 10:].sum() == 0  # departed (one window of slack for in-flight frames)
        np.testing.assert_array_equal(rep.window_active, [10] * 4 + [20] * 4 + [10] * 4)

    def test_arrivals_start_from_defaults(self):
        from kwcsma.controllers import ApController

        ctl = ApController.wtop(CFG)
        sched = [(0, 5), (3 * SEC, 8)]
        rep = run_sim(ring(8), CFG, StrategySpec.wtop(), 6 * SEC, 2, schedule=sched, controller=ctl,
                      trace_events=True)
        arrivals = [(t, i) for t, i, ev in rep.events if ev == "arrive" and t > 0]
        assert [i for _, i in arrivals] == [5, 6, 7]
        assert rep.successes[5:].sum() > 0

    def test_static_schedule_equals_plain_run(self):
        a = run_sim(ring(6), CFG, StrategySpec.std_dcf(), 2 * SEC, 9)
        b = run_sim(ring(6), CFG, StrategySpec.std_dcf(), 2 * SEC, 9, schedule=[(0, 6)])
        assert a.to_dict() == b.to_dict()


class TestJain:
    def test_extremes(self):
        assert jain_index([1, 1, 1, 1]) == pytest.approx(1.0)
        assert jain_index([1, 0, 0, 0]) == pytest.approx(0.25)
        assert jain_index([0, 0]) == 1.0

    def test_weighted_normalisation(self):
        rep = run_sim(ring(3), CFG, [StrategySpec.wtop(w) for w in (1, 2, 3)], SEC, 0)
        m = report_metrics(rep, weights=[1, 2, 3])
        np.testing.assert_allclose(m.normalized_bps, rep.node_throughput_bps / [1, 2, 3])
        with pytest.raises(ValueError):
            report_metrics(rep, weights=[1, 2])
