import math

import numpy as np
import pytest

from floorcluster.errors import EmptyCampaign
from floorcluster.synth import (
    PRESETS,
    BuildingPlan,
    PropagationModel,
    generate_campaign,
    generate_tracks,
    grid_points,
    preset,
    tracks_database,
)

QUIET = PropagationModel(shadowing_sigma_db=0.0, quantize_db=0.0)


class TestPropagation:
    def test_reference_distance_gives_tx_power(self):
        assert QUIET.mean_rss(1.0, 0) == pytest.approx(-30.0)
        assert QUIET.mean_rss(0.2, 0) == pytest.approx(-30.0)

    def test_one_floor_below(self):
        # 3.5 m straight down, one slab: -30 - 30*log10(3.5) - 15
        assert QUIET.mean_rss(3.5, 1) == pytest.approx(-61.3220, abs=1e-3)

    def test_monotone_in_distance_and_floors(self):
        d = np.linspace(1.0, 200.0, 500)
        assert np.all(np.diff(QUIET.mean_rss(d, 0)) < 0)
        assert np.all(np.diff(QUIET.mean_rss(5.0, np.arange(6))) < 0)

    def test_max_floors_heard(self):
        assert PropagationModel().max_floors_heard() == 4
        assert PropagationModel(floor_attenuation_db=40).max_floors_heard() == 1
        assert PropagationModel(tx_power_dbm=-100).max_floors_heard() == -1

    def test_sample_quantised_clamped_thresholded(self):
        rng = np.random.default_rng(0)
        out = PropagationModel().sample(np.full(2000, 20.0), np.zeros(2000, dtype=int), rng)
        heard = out[~np.isnan(out)]
        assert np.all(heard == np.round(heard))
        assert heard.min() >= -95 and heard.max() <= 0

    def test_noise_level(self):
        rng = np.random.default_rng(1)
        prop = PropagationModel(quantize_db=0.0, hearability_threshold_dbm=-200)
        out = prop.sample(np.full(20000, 10.0), np.zeros(20000, dtype=int), rng)
        assert out.mean() == pytest.approx(-60.0, abs=0.1)
        assert out.std() == pytest.approx(4.0, rel=0.03)


class TestCampaign:
    def test_grid(self):
        plan = BuildingPlan(width=3.0, depth=1.5)
        assert grid_points(plan, 1.5).tolist() == [[0.75, 0.75], [2.25, 0.75]]

    def test_deterministic(self, small_plan):
        a = generate_campaign(small_plan, PropagationModel(), 3.0, seed=9)
        b = generate_campaign(small_plan, PropagationModel(), 3.0, seed=9)
        c = generate_campaign(small_plan, PropagationModel(), 3.0, seed=10)
        assert a == b
        assert np.array_equal(a.dense, b.dense)
        assert not np.array_equal(a.dense, c.dense)

    def test_shape_and_labels(self, small_campaign, small_plan):
        assert small_campaign.n_fp == 3 * 8 * 6
        assert small_campaign.floor_counts() == {0: 48, 1: 48, 2: 48}
        for rec in small_campaign.records:
            assert rec.position[2] == rec.floor * small_plan.floor_spacing

    def test_nothing_heard(self, small_plan):
        with pytest.raises(EmptyCampaign):
            generate_campaign(small_plan, PropagationModel(tx_power_dbm=-120), 3.0)

    def test_ap_layout_inside_slabs(self):
        plan = BuildingPlan(n_floors=3, n_aps=31, seed=2)
        pos, floors = plan.ap_layout()
        assert np.bincount(floors).tolist() == [11, 10, 10]
        offset = pos[:, 2] - floors * plan.floor_spacing
        assert offset.min() >= 0 and offset.max() <= plan.ap_height_max


class TestTracks:
    def test_zero_points(self, small_plan):
        assert generate_tracks(small_plan, PropagationModel(), 0) == []

    def test_restricted_floor(self, small_plan):
        obs = generate_tracks(small_plan, PropagationModel(), 120, seed=3, floors=[2])
        assert len(obs) == 120
        assert {o.true_floor for o in obs} == {2}

    def test_deterministic_and_inside(self, small_plan):
        a = generate_tracks(small_plan, PropagationModel(), 90, seed=4, track_length=20)
        b = generate_tracks(small_plan, PropagationModel(), 90, seed=4, track_length=20)
        assert a == b
        xy = np.array([o.position[:2] for o in a])
        assert xy.min() >= 0 and xy[:, 0].max() <= small_plan.width and xy[:, 1].max() <= small_plan.depth

    def test_stride(self, small_plan):
        obs = generate_tracks(small_plan, PropagationModel(), 30, seed=4, track_length=30, stride=1.0)
        xy = np.array([o.position[:2] for o in obs])
        assert np.all(np.linalg.norm(np.diff(xy, axis=0), axis=1) <= 1.0 + 1e-9)

    def test_bad_floor(self, small_plan):
        with pytest.raises(ValueError):
            generate_tracks(small_plan, PropagationModel(), 5, floors=[7])

    def test_tracks_database_roundtrip(self, small_plan, small_tracks):
        db = tracks_database(small_plan, small_tracks)
        assert db.n_fp == sum(bool(o.readings) for o in small_tracks)
        assert [r.floor for r in db.records] == [o.true_floor for o in small_tracks if o.readings]


class TestPresets:
    @pytest.mark.parametrize(
        "name,floors,n_fp,n_ap,n_t",
        [("univ1", 4, 16080, 509, 6796), ("univ2", 3, 9912, 489, 2301), ("mall", 6, 1632, 468, 3503), ("office", 4, 352, 1103, 3873)],
    )
    def test_shapes(self, name, floors, n_fp, n_ap, n_t):
        plan, step, n_tracks = preset(name, seed=1)
        assert plan.n_floors == floors and plan.n_aps == n_ap and n_tracks == n_t
        assert plan.n_floors * len(grid_points(plan, step)) == n_fp

    def test_office_campaign(self):
        plan, step, _ = preset("office", seed=1)
        db = generate_campaign(plan, PropagationModel(), step, seed=1)
        assert db.n_fp == 352 and len(db.floors) == 4
        assert db.n_ap <= 1103

    def test_unknown(self):
        with pytest.raises(ValueError):
            preset("castle")
        assert set(PRESETS) == {"univ1", "univ2", "mall", "office"}
