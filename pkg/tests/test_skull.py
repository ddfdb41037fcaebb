import numpy as np
import pytest

from tfusplan.skull import (
    EmptySkullError,
    SkullMask,
    apply_mask,
    ball_offsets,
    extract_skull_mask,
    intracranial_mask,
)
from tfusplan.volume import DimensionMismatchError, Unit, Volume, VolumeError, WorldPoint


def hu_volume(data, spacing=(1.0, 1.0, 1.0)):
    return Volume(np.asarray(data, dtype=np.float32), spacing, unit=Unit.HU)


class TestExtract:
    def test_two_blobs_keeps_larger(self):
        data = np.zeros((12, 12, 12), dtype=np.float32)
        # 10-voxel blob
        data[1:3, 1:3, 1:3] = 500.0
        data[3, 1, 1] = 500.0
        data[3, 2, 1] = 500.0
        # 5-voxel blob, disjoint
        data[8:9, 8:9, 5:10] = 500.0
        ct = hu_volume(data)
        sk = extract_skull_mask(ct, threshold=400.0, dilation_radius=0.0)
        assert sk.voxel_count == 10
        assert sk.asbool[1, 1, 1] and not sk.asbool[8, 8, 7]

    def test_single_voxel_unit_dilation_gives_seven(self):
        data = np.zeros((7, 7, 7), dtype=np.float32)
        data[3, 3, 3] = 1000.0
        sk = extract_skull_mask(hu_volume(data), threshold=400.0, dilation_radius=1.0)
        assert sk.voxel_count == 7
        assert sk.asbool[3, 3, 3]
        for d in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
            assert sk.asbool[3 + d[0], 3 + d[1], 3 + d[2]]

    def test_all_water_raises(self):
        with pytest.raises(EmptySkullError):
            extract_skull_mask(hu_volume(np.zeros((4, 4, 4))))

    def test_diagonal_voxels_are_one_component(self):
        # 26-connectivity: corner-touching voxels belong together
        data = np.zeros((6, 6, 6), dtype=np.float32)
        data[1, 1, 1] = 500.0
        data[2, 2, 2] = 500.0
        data[4, 4, 4] = 500.0  # second, smaller component
        sk = extract_skull_mask(hu_volume(data), dilation_radius=0.0)
        assert sk.voxel_count == 2

    def test_dilation_extensive_and_monotone(self):
        data = np.zeros((16, 16, 16), dtype=np.float32)
        data[6:9, 6:9, 6:9] = 900.0
        ct = hu_volume(data)
        masks = [extract_skull_mask(ct, dilation_radius=r).asbool for r in (0.0, 1.0, 2.0)]
        assert np.all(masks[0] <= masks[1]) and np.all(masks[1] <= masks[2])
        assert masks[1].sum() > masks[0].sum()

    def test_requires_hu_unit(self):
        v = Volume(np.ones((3, 3, 3)), (1, 1, 1), unit=Unit.PA)
        with pytest.raises(VolumeError):
            extract_skull_mask(v)

    def test_shell_recovers_constructed_voxel_set(self, uniform_shell_volume):
        sk = extract_skull_mask(uniform_shell_volume, threshold=400.0, dilation_radius=0.0)
        assert np.array_equal(sk.asbool, uniform_shell_volume.data >= 400.0)


class TestBall:
    def test_radius_one_voxel_is_cross(self):
        b = ball_offsets(1.0, (1.0, 1.0, 1.0))
        assert b.sum() == 7

    def test_anisotropic_spacing(self):
        b = ball_offsets(1.0, (0.5, 1.0, 1.0))
        # two steps of 0.5 mm fit along x, one along y/z
        assert b.shape == (5, 3, 3)
        assert b[0, 1, 1] and b[4, 1, 1]


class TestApplyMask:
    def test_identity_mask(self, small_hu_volume):
        ones = SkullMask(small_hu_volume.with_data(np.ones(small_hu_volume.dims, np.float32),
                                                   unit=Unit.DIMENSIONLESS), 400.0, 0.0)
        out = apply_mask(small_hu_volume, ones)
        assert np.array_equal(out.data, small_hu_volume.data)

    def test_zero_mask(self, small_hu_volume):
        zeros = SkullMask(small_hu_volume.with_data(np.zeros(small_hu_volume.dims, np.float32),
                                                    unit=Unit.DIMENSIONLESS), 400.0, 0.0)
        assert np.all(apply_mask(small_hu_volume, zeros).data == 0)

    def test_checkerboard(self):
        data = np.full((4, 4, 4), 1000.0, dtype=np.float32)
        ct = hu_volume(data)
        ii, jj, kk = np.meshgrid(*[np.arange(4)] * 3, indexing="ij")
        board = ((ii + jj + kk) % 2).astype(np.float32)
        m = SkullMask(ct.with_data(board, unit=Unit.DIMENSIONLESS), 400.0, 0.0)
        out = apply_mask(ct, m)
        assert np.all(out.data[board > 0.5] == 1000.0)
        assert np.all(out.data[board < 0.5] == 0.0)

    def test_idempotent(self, small_hu_volume):
        data = (np.arange(512).reshape(8, 8, 8) % 2).astype(np.float32)
        m = SkullMask(small_hu_volume.with_data(data, unit=Unit.DIMENSIONLESS), 400.0, 0.0)
        once = apply_mask(small_hu_volume, m)
        twice = apply_mask(once, m)
        assert np.array_equal(once.data, twice.data)

    def test_dims_mismatch(self, small_hu_volume):
        other = Volume(np.ones((3, 3, 3), np.float32), (1, 1, 1), unit=Unit.DIMENSIONLESS)
        with pytest.raises(DimensionMismatchError):
            apply_mask(small_hu_volume, SkullMask(other, 400.0, 0.0))


class TestIntracranial:
    def test_shell_interior(self, uniform_shell_volume):
        sk = extract_skull_mask(uniform_shell_volume, dilation_radius=0.0)
        inside = intracranial_mask(sk, WorldPoint(0.0, 0.0, 0.0))
        asb = inside.data > 0.5
        c = np.asarray(uniform_shell_volume.dims) // 2
        assert asb[tuple(c)]
        # corners belong to the outside component
        assert not asb[0, 0, 0]
        # interior stops at the inner radius
        r_inner_vox = int(24.0 / 0.5) - 2
        assert asb[c[0] + r_inner_vox - 2, c[1], c[2]]

    def test_focus_in_bone_rejected(self, uniform_shell_volume):
        sk = extract_skull_mask(uniform_shell_volume, dilation_radius=0.0)
        with pytest.raises(VolumeError):
            intracranial_mask(sk, WorldPoint(0.0, 0.0, 27.0))

    def test_focus_outside_volume_rejected(self, uniform_shell_volume):
        sk = extract_skull_mask(uniform_shell_volume, dilation_radius=0.0)
        with pytest.raises(VolumeError):
            intracranial_mask(sk, WorldPoint(500.0, 0.0, 0.0))


def test_largest_component_order_invariant():
    # permuting the volume axes permutes the mask identically (set equality
    # of the selected component under relabeling)
    rng = np.random.default_rng(7)
    data = (rng.uniform(0, 1, size=(14, 14, 14)) > 0.72).astype(np.float32) * 600.0
    ct = hu_volume(data)
    sk = extract_skull_mask(ct, dilation_radius=0.0)
    perm = hu_volume(np.transpose(data, (2, 0, 1)))
    sk_perm = extract_skull_mask(perm, dilation_radius=0.0)
    assert np.array_equal(np.transpose(sk.asbool, (2, 0, 1)), sk_perm.asbool)
