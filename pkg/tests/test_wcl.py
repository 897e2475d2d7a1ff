import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from floorcluster.core import FingerprintDatabase, FingerprintRecord, FloorSpec, Observation
from floorcluster.errors import NoCoverage, ZeroWeightSum
from floorcluster.synth import BuildingPlan, PropagationModel, generate_campaign
from floorcluster.wcl import (
    ApPositionTable,
    estimate_ap_positions,
    rss_weight,
    rss_weights,
    snap_to_floor,
    wcl_estimate,
    weighted_centroid,
)

FLOORS = (FloorSpec(0, 0.0), FloorSpec(1, 3.5), FloorSpec(2, 7.0))


def table(zs, floors=FLOORS, w0=-100.0, mode="shift"):
    ids = tuple(f"ap{i}" for i in range(len(zs)))
    pos = np.column_stack([np.zeros(len(zs)), np.zeros(len(zs)), zs])
    return ApPositionTable("t", ids, pos, np.ones(len(zs), int), np.zeros(len(zs), bool), floors, w0, mode)


def db_of(records, floors=(FloorSpec(0, 0.0), FloorSpec(1, 4.0)), aps=("A", "B")):
    return FingerprintDatabase("b", aps, floors, tuple(FingerprintRecord(*r) for r in records))


class TestRssWeight:
    @pytest.mark.parametrize("rss,expected", [(-50, 50), (-100, 0), (-30, 70)])
    def test_linear_shift(self, rss, expected):
        assert rss_weight(rss, -100) == expected

    def test_clamped_below_floor(self):
        w, clamped = rss_weights(np.array([-105.0, -50.0]), -100.0)
        assert w.tolist() == [0.0, 50.0]
        assert clamped == 1

    def test_power_mode(self):
        w, _ = rss_weights(np.array([-30.0, -40.0]), mode="power")
        assert w == pytest.approx([1e-3, 1e-4])

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            rss_weights(np.array([-30.0]), mode="bogus")


class TestApPositions:
    def test_single_support(self):
        db = db_of([((1.0, 2.0, 0.0), 0, {"A": -60.0}), ((5.0, 5.0, 4.0), 1, {"B": -70.0})])
        t = estimate_ap_positions(db)
        assert t.positions[t.index["A"]].tolist() == [1.0, 2.0, 0.0]
        assert t.support.tolist() == [1, 1]

    def test_equal_rss_midpoint(self):
        db = db_of([((0.0, 0.0, 0.0), 0, {"A": -60.0}), ((0.0, 0.0, 4.0), 1, {"A": -60.0})], aps=("A",))
        assert estimate_ap_positions(db).positions[0, 2] == 2.0

    def test_shift_weighted_height(self):
        # weights 60 and 20: (60*0 + 20*4) / 80 = 1.0
        db = db_of([((0.0, 0.0, 0.0), 0, {"A": -40.0}), ((0.0, 0.0, 4.0), 1, {"A": -80.0})], aps=("A",))
        assert estimate_ap_positions(db).positions[0, 2] == pytest.approx(1.0, abs=1e-12)

    def test_unheard_aps_omitted(self):
        db = db_of([((0.0, 0.0, 0.0), 0, {"A": -40.0})], aps=("A", "B", "C"))
        t = estimate_ap_positions(db)
        assert t.ap_ids == ("A",)

    def test_zero_weight_fallback(self):
        db = db_of([((0.0, 0.0, 0.0), 0, {"A": -105.0}), ((2.0, 0.0, 4.0), 1, {"A": -104.0, "B": -50.0})])
        t = estimate_ap_positions(db)
        row = t.index["A"]
        assert t.fallback[row]
        assert t.positions[row].tolist() == [1.0, 0.0, 2.0]
        assert not t.fallback[t.index["B"]]
        with pytest.raises(ZeroWeightSum):
            estimate_ap_positions(db, strict=True)

    def test_inside_convex_hull_of_support(self, small_campaign):
        t = estimate_ap_positions(small_campaign)
        pos = small_campaign.positions
        for ap, c in zip(t.ap_ids, t.positions):
            support = pos[[ap in r.readings for r in small_campaign.records]]
            n = len(support)
            # feasibility of c = sum(l_i p_i), sum(l_i) = 1, l >= 0
            a_eq = np.vstack([support.T, np.ones(n)])
            b_eq = np.append(c, 1.0)
            res = linprog(np.zeros(n), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
            assert res.status == 0, f"{ap} outside the hull of its {n} supporting fingerprints"

    def test_own_floor_hearing_lands_in_slab(self):
        plan = BuildingPlan(n_floors=4, width=30.0, depth=20.0, n_aps=40, seed=2)
        prop = PropagationModel(floor_attenuation_db=200.0)
        db = generate_campaign(plan, prop, grid_step=2.0, seed=2)
        t = estimate_ap_positions(db)
        ap_pos, ap_floor = plan.ap_layout()
        floor_of = dict(zip(plan.ap_ids(), ap_floor))
        for ap, c in zip(t.ap_ids, t.positions):
            zc = floor_of[ap] * plan.floor_spacing
            assert abs(c[2] - zc) < plan.floor_spacing / 2


class TestWclEstimate:
    def test_single_ap(self):
        est = wcl_estimate(table([3.5]), Observation({"ap0": -60.0}))
        assert est.z_hat == 3.5 and est.floor == 1 and est.heard_count == 1

    def test_symmetric_pair(self):
        est = wcl_estimate(table([0.0, 7.0]), Observation({"ap0": -60.0, "ap1": -60.0}))
        assert est.z_hat == 3.5

    def test_weighted_pair(self):
        # weights 30 and 10: (30*0 + 10*3.5) / 40 = 0.875
        est = wcl_estimate(table([0.0, 3.5]), Observation({"ap0": -70.0, "ap1": -90.0}))
        assert est.z_hat == pytest.approx(0.875, abs=1e-12)
        assert est.floor == 0

    def test_no_coverage(self):
        with pytest.raises(NoCoverage):
            wcl_estimate(table([0.0]), Observation({"zz": -50.0}))
        with pytest.raises(NoCoverage):
            wcl_estimate(table([0.0]), Observation({"ap0": -100.0}))

    def test_unknown_aps_ignored(self):
        est = wcl_estimate(table([7.0]), Observation({"ap0": -50.0, "zz": -30.0}))
        assert est.z_hat == 7.0 and est.heard_count == 1

    @settings(max_examples=200)
    @given(st.lists(st.tuples(st.floats(0.0, 7.0), st.integers(-99, -20)), min_size=1, max_size=15))
    def test_convex_combination(self, aps):
        zs = [z for z, _ in aps]
        obs = Observation({f"ap{i}": float(r) for i, (_, r) in enumerate(aps)})
        z_hat = wcl_estimate(table(zs), obs).z_hat
        assert min(zs) - 1e-12 <= z_hat <= max(zs) + 1e-12

    @given(st.lists(st.tuples(st.floats(0.0, 7.0), st.integers(-99, -20)), min_size=2, max_size=10), st.floats(1e-3, 1e3))
    def test_scale_invariance(self, aps, scale):
        zs = np.array([z for z, _ in aps])
        w = np.array([r + 100.0 for _, r in aps])
        base = weighted_centroid(w, zs)
        assert weighted_centroid(scale * w, zs) == pytest.approx(base, rel=1e-9, abs=1e-12)

    @given(
        st.lists(st.tuples(st.floats(0.0, 7.0), st.integers(-99, -40)), min_size=2, max_size=10),
        st.data(),
    )
    def test_monotone_influence(self, aps, data):
        zs = [z for z, _ in aps]
        t = table(zs)
        readings = {f"ap{i}": float(r) for i, (_, r) in enumerate(aps)}
        i = data.draw(st.integers(0, len(aps) - 1))
        boost = data.draw(st.integers(1, 30))
        before = wcl_estimate(t, Observation(readings)).z_hat
        readings[f"ap{i}"] += boost
        after = wcl_estimate(t, Observation(readings)).z_hat
        # moves weakly toward the boosted AP's height
        assert abs(after - zs[i]) <= abs(before - zs[i]) + 1e-9


class TestSnap:
    def test_exact_hit(self):
        assert snap_to_floor(7.0, FLOORS) == 2

    def test_tie_goes_lower(self):
        assert snap_to_floor(1.75, FLOORS) == 0

    def test_nearest(self):
        assert snap_to_floor(5.9, FLOORS) == 2

    def test_outside_range(self):
        assert snap_to_floor(-3.0, FLOORS) == 0
        assert snap_to_floor(30.0, FLOORS) == 2
