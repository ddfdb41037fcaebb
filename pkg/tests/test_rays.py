import math
import warnings

import numpy as np
import pytest

import reference
from tfusplan.phantom import ShellPhantomSpec, make_shell_phantom
from tfusplan.rays import (
    RayCaster,
    cast_element_ray,
    export_plan_csv,
    optimize_array_tilt,
    plan_summary,
)
from tfusplan.transducer import build_array
from tfusplan.volume import Unit, Volume, VolumeError, WorldPoint


def make_slab(spacing=0.2, hu=1500.0, z0_mm=8.0, thickness_mm=6.0, dims=(40, 40, 100)):
    """Flat slab normal to z; returns the volume and its voxel-extent bounds."""
    data = np.zeros(dims, dtype=np.float32)
    k0 = int(round(z0_mm / spacing))
    k1 = k0 + int(round(thickness_mm / spacing))
    data[:, :, k0:k1] = hu
    vol = Volume(data, (spacing,) * 3, unit=Unit.HU)
    return vol, (k0 - 0.5) * spacing, (k1 - 0.5) * spacing


class TestSlab:
    def test_normal_incidence_uniform_slab(self):
        vol, lo, hi = make_slab()
        center = 0.5 * (vol.dims[0] - 1) * vol.spacing[0]
        focus = WorldPoint(center, center, 19.0)
        plan = cast_element_ray(vol, WorldPoint(center, center, -25.0), focus)
        assert plan.active
        assert plan.incident_angle == pytest.approx(0.0, abs=0.5)
        assert plan.skull_thickness == pytest.approx(6.0, abs=0.2)
        assert plan.sdr_ray == pytest.approx(1.0, abs=1e-6)
        assert plan.entry_point.z == pytest.approx(lo, abs=0.15)
        assert plan.exit_point.z == pytest.approx(hi, abs=0.15)

    def test_oblique_25_degrees_inactive(self):
        # wide slab so the oblique ray stays inside the lateral extent
        vol, _, _ = make_slab(dims=(200, 40, 100))
        focus = WorldPoint(30.0, 0.5 * (vol.dims[1] - 1) * vol.spacing[1], 18.0)
        ang = math.radians(25.0)
        L = 30.0
        elem = WorldPoint(focus.x - L * math.sin(ang), focus.y, focus.z - L * math.cos(ang))
        plan = cast_element_ray(vol, elem, focus)
        assert plan.entry_point is not None
        assert plan.incident_angle == pytest.approx(25.0, abs=1.0)
        assert not plan.active

    def test_no_crossing(self):
        vol, _, _ = make_slab()
        center = 0.5 * (vol.dims[0] - 1) * vol.spacing[0]
        # ray that stays in the water column in front of the slab
        plan = cast_element_ray(vol, WorldPoint(center, center, -10.0), WorldPoint(center, center, 5.0))
        assert not plan.active
        assert plan.skull_thickness == 0.0 and plan.sdr_ray == 0.0
        assert plan.entry_point is None and math.isnan(plan.incident_angle)

    def test_focus_outside_volume_rejected(self):
        vol, _, _ = make_slab()
        with pytest.raises(VolumeError):
            cast_element_ray(vol, WorldPoint(4.0, 4.0, -10.0), WorldPoint(4.0, 4.0, 50.0))


class TestLayered:
    def test_radial_sdr_half(self, layered_shell_volume):
        plan = cast_element_ray(layered_shell_volume, WorldPoint(0.0, 0.0, -60.0),
                                WorldPoint(0.0, 0.0, 0.0))
        assert plan.active
        assert plan.sdr_ray == pytest.approx(0.5, abs=0.02)

    def test_matches_dense_reference(self, layered_shell_volume):
        vol = layered_shell_volume
        caster = RayCaster(vol)
        arr = build_array(radius=60.0, focus=WorldPoint(0.0, 0.0, 0.0))
        some = arr.enabled_positions()[::90]
        res = caster.cast(some, np.zeros(3))
        for row, elem in enumerate(some):
            ref = reference.cast_ray_dense(
                vol.data, vol.spacing, vol.origin, elem, (0.0, 0.0, 0.0),
                threshold=400.0, step=0.1, grad_fields=caster._grad,
                sdr_margin=1.0, angle_limit=20.0,
            )
            assert bool(res["found"][row]) == ref["found"]
            assert res["thickness"][row] == pytest.approx(ref["thickness"], abs=0.11)
            assert res["sdr"][row] == pytest.approx(ref["sdr"], abs=1e-3)
            assert res["angle"][row] == pytest.approx(ref["angle"], abs=0.05)
            assert bool(res["active"][row]) == ref["active"]


class TestPlanSummary:
    def test_concentric_uniform_shell(self, uniform_shell_volume):
        arr = build_array(radius=60.0, focus=WorldPoint(0.0, 0.0, 0.0))
        summary = plan_summary(uniform_shell_volume, arr)
        assert summary.nae == 990
        # at 0.5 mm raster the staircase leaves a few degrees of normal
        # ripple; the acceptance suite pins 0.5 deg on a 0.15 mm phantom
        angles = np.array([p.incident_angle for p in summary.per_element])
        assert np.max(angles) <= 5.0
        assert np.mean(angles) <= 1.0
        assert summary.sdr == pytest.approx(1.0, abs=1e-6)
        assert summary.st_mean == pytest.approx(6.0, abs=0.2)
        assert len(summary.per_element) == 990

    def test_layered_shell_summary(self, layered_shell_volume):
        arr = build_array(radius=60.0, focus=WorldPoint(0.0, 0.0, 0.0))
        summary = plan_summary(layered_shell_volume, arr)
        assert summary.nae == 990
        assert summary.sdr == pytest.approx(0.5, abs=0.02)
        assert summary.st_mean == pytest.approx(6.0, abs=0.35)

    def test_no_skull_warns_and_zeros(self):
        water = Volume(np.zeros((40, 40, 40), np.float32), (1.0,) * 3,
                       origin=(-19.5, -19.5, -19.5), unit=Unit.HU)
        arr = build_array(radius=50.0, focus=WorldPoint(0.0, 0.0, 0.0))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            summary = plan_summary(water, arr)
        assert summary.nae == 0 and summary.sdr == 0.0 and summary.st_mean == 0.0
        assert any("active" in str(w.message) for w in caught)

    def test_deterministic_and_order_independent(self, uniform_shell_volume):
        arr = build_array(radius=60.0, focus=WorldPoint(0.0, 0.0, 0.0))
        a = plan_summary(uniform_shell_volume, arr)
        b = plan_summary(uniform_shell_volume, arr)
        assert a.nae == b.nae and a.sdr == b.sdr and a.st_mean == b.st_mean
        # element-wise results equal regardless of input ordering
        caster = RayCaster(uniform_shell_volume)
        pos = arr.enabled_positions()
        fwd = caster.cast(pos, np.zeros(3))
        rev = caster.cast(pos[::-1], np.zeros(3))
        assert np.allclose(fwd["thickness"], rev["thickness"][::-1])
        assert np.array_equal(fwd["active"], rev["active"][::-1])

    def test_scaling_in_bone_hu_preserves_activity(self, uniform_shell_volume):
        arr = build_array(radius=60.0, focus=WorldPoint(0.0, 0.0, 0.0))
        base = plan_summary(uniform_shell_volume, arr)
        scaled_vol = uniform_shell_volume.with_data(uniform_shell_volume.data * 2.0)
        scaled = plan_summary(scaled_vol, arr)
        assert scaled.nae == base.nae
        assert np.array_equal(scaled.activity_vector(), base.activity_vector())
        assert scaled.sdr == pytest.approx(base.sdr, abs=1e-9)
        # entry/exit move slightly: the threshold crossing shifts on the
        # boundary-interpolation ramp, bounded by one voxel per side
        assert scaled.st_mean == pytest.approx(base.st_mean, abs=0.5)
        # entry shifts along the boundary ramp, so the sampled normal (and
        # with it the angle) can wiggle slightly
        for pa, pb in zip(base.per_element, scaled.per_element):
            assert pb.incident_angle == pytest.approx(pa.incident_angle, abs=1.5)

    def test_export_csv(self, uniform_shell_volume, tmp_path):
        import csv

        arr = build_array(radius=60.0, focus=WorldPoint(0.0, 0.0, 0.0))
        summary = plan_summary(uniform_shell_volume, arr)
        p = tmp_path / "plan.csv"
        export_plan_csv(summary, p)
        rows = list(csv.DictReader(open(p)))
        assert len(rows) == 990
        assert sum(int(r["active"]) for r in rows) == 990


class TestOptimize:
    def test_concentric_optimum_at_origin(self, uniform_shell_volume):
        tx, ty, nae = optimize_array_tilt(uniform_shell_volume, radius=60.0,
                                          focus=WorldPoint(0.0, 0.0, 0.0), step_deg=5.0)
        assert (tx, ty) == (0.0, 0.0)
        assert nae == 990

    def test_displaced_shell_dominates_untilted(self):
        spec = ShellPhantomSpec(24.0, 18.0, 2.0, 1800.0, 1000.0, center=WorldPoint(4.0, 0.0, 0.0))
        vol = make_shell_phantom(spec, dims=(96, 96, 96), spacing=(0.75, 0.75, 0.75))
        caster = RayCaster(vol)
        focus = WorldPoint(0.0, 0.0, 0.0)
        tx, ty, best = optimize_array_tilt(vol, radius=45.0, focus=focus, step_deg=5.0, caster=caster)
        untilted = caster.count_active(build_array(45.0, focus).enabled_positions(), focus.as_array())
        assert best >= untilted
