import numpy as np
import pytest

from panotour.geometry import PanoPose, quat_from_axis_angle, quat_from_yaw
from panotour.panocam import (CPRoPETable, cprope_table, pixel_direction,
                              pixel_grid_directions, plucker_rays,
                              project_point, project_points)


# ---------------------------------------------------------------------------
# Pixel directions
# ---------------------------------------------------------------------------

class TestPixelDirection:
    def test_center_looks_forward(self):
        w, h = 64, 32
        d = pixel_direction(w / 2, h / 2, w, h)
        # half-pixel shift leaves one pixel's angle of slack
        assert np.arccos(np.clip(d @ np.array([1.0, 0.0, 0.0]), -1, 1)) < 2 * np.pi / w

    def test_top_row_center_is_up(self):
        w, h = 64, 32
        d = pixel_direction(w / 2, 0, w, h)
        assert np.arccos(np.clip(d @ np.array([0.0, 0.0, 1.0]), -1, 1)) <= np.pi / h

    def test_seam_wraparound(self):
        w, h = 64, 32
        d0 = pixel_direction(0, h / 2, w, h)
        d1 = pixel_direction(w - 1, h / 2, w, h)
        az0 = np.arctan2(d0[1], d0[0])
        az1 = np.arctan2(d1[1], d1[0])
        gap = (az0 - az1) % (2 * np.pi)
        assert gap == pytest.approx(2 * np.pi / w, rel=1e-9)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            pixel_direction(64, 0, 64, 32)
        with pytest.raises(ValueError):
            pixel_direction(0, -1, 64, 32)

    def test_grid_matches_scalar(self, rng):
        w, h = 32, 16
        grid = pixel_grid_directions(w, h)
        for _ in range(20):
            x = int(rng.integers(0, w))
            y = int(rng.integers(0, h))
            assert np.allclose(grid[y, x], pixel_direction(x, y, w, h), atol=1e-15)

    def test_unit_length(self):
        grid = pixel_grid_directions(64, 32)
        assert np.allclose(np.linalg.norm(grid, axis=2), 1.0, atol=1e-12)


# ---------------------------------------------------------------------------
# Projection
# ---------------------------------------------------------------------------

class TestProjectPoint:
    def test_forward_point_hits_center(self):
        pose = PanoPose(np.zeros(3))
        x, y, depth = project_point(pose, np.array([2.0, 0.0, 0.0]), 64, 32)
        assert depth == pytest.approx(2.0)
        assert x == pytest.approx(31.5, abs=1e-9)  # azimuth 0 -> (0+pi)*W/2pi - 0.5
        assert y == pytest.approx(15.5, abs=1e-9)

    def test_round_trip(self, rng):
        w, h = 128, 64
        pose = PanoPose(np.array([0.3, -0.7, 1.1]),
                        quat_from_axis_angle([0.2, 0.5, 1.0], 0.8))
        xs = rng.integers(0, w, 500)
        ys = rng.integers(0, h, 500)
        ts = rng.uniform(0.5, 5.0, 500)
        R = pose.matrix
        for x, y, t in zip(xs, ys, ts):
            p = pose.position + t * (R @ pixel_direction(int(x), int(y), w, h))
            px, py, pt = project_point(pose, p, w, h)
            dx = min(abs(px - x), w - abs(px - x))  # distance across the seam
            assert dx < 1e-6
            assert abs(py - y) < 1e-6
            assert pt == pytest.approx(t, abs=1e-9)

    def test_pole_convention(self):
        pose = PanoPose(np.zeros(3))
        x, y, _ = project_point(pose, np.array([0.0, 0.0, 3.0]), 64, 32)
        assert x == 0.0
        assert y == pytest.approx(-0.5, abs=1e-9)

    def test_camera_position_rejected(self):
        pose = PanoPose(np.ones(3))
        with pytest.raises(ValueError):
            project_point(pose, np.ones(3), 64, 32)

    def test_wrap_into_range(self, rng):
        pose = PanoPose(np.zeros(3))
        pts = rng.normal(size=(200, 3)) * 3 + np.array([0.1, 0, 0])
        x, y, _ = project_points(pose, pts, 64, 32)
        assert np.all((x >= 0) & (x < 64))


# ---------------------------------------------------------------------------
# Extrinsics-only rays
# ---------------------------------------------------------------------------

class TestPluckerRays:
    def test_origin_camera_zero_moments(self):
        rm = plucker_rays(PanoPose(np.zeros(3)), 32, 16)
        assert np.all(rm.moments == 0.0)

    def test_cross_product_example(self):
        # moment of d = +z through o = +x is (1,0,0) x (0,0,1) = (0,-1,0)
        o = np.array([1.0, 0.0, 0.0])
        rm = plucker_rays(PanoPose(o), 32, 16)
        top_center = rm.directions[0, 16]
        assert np.allclose(top_center, [0, 0, 1], atol=0.1)
        d = np.array([0.0, 0.0, 1.0])
        expect = np.cross(o, d)
        assert np.allclose(expect, [0, -1, 0])
        x, y = 16, 0
        m = np.cross(o, rm.directions[y, x])
        assert np.allclose(rm.moments[y, x], m, atol=1e-15)

    def test_identity_rotation_matches_pixel_directions(self):
        rm = plucker_rays(PanoPose(np.array([1.0, 2.0, 3.0])), 64, 32)
        assert np.array_equal(rm.directions, pixel_grid_directions(64, 32))

    def test_direction_unit_and_moment_orthogonal(self):
        pose = PanoPose(np.array([0.5, -1.0, 2.0]), quat_from_yaw(0.7))
        rm = plucker_rays(pose, 64, 32)
        assert np.allclose(np.linalg.norm(rm.directions, axis=2), 1.0, atol=1e-9)
        dots = np.einsum("hwc,hwc->hw", rm.directions, rm.moments)
        assert np.max(np.abs(dots)) < 1e-9

    def test_moment_invariant_along_ray(self, rng):
        pose = PanoPose(np.array([0.4, 1.2, -0.3]), quat_from_yaw(1.1))
        rm = plucker_rays(pose, 32, 16)
        d = rm.directions.reshape(-1, 3)
        o = pose.position
        for t in rng.uniform(-5, 5, 10):
            slid = np.cross(o[None, :] + t * d, d)
            assert np.allclose(slid, rm.moments.reshape(-1, 3), atol=1e-9)


# ---------------------------------------------------------------------------
# Circular/vertical rotary tables
# ---------------------------------------------------------------------------

class TestCPRoPETable:
    def test_half_width_phase(self):
        t = cprope_table(1024, 4, 64, 4)
        assert t.h_cos[0, 512] == pytest.approx(-1.0, abs=1e-12)
        assert t.h_sin[0, 512] == pytest.approx(0.0, abs=1e-12)

    def test_third_harmonic_quarter_width(self):
        t = cprope_table(64, 4, 32, 4)
        # m = 3 at x = W/4: theta = 3 pi / 2
        assert t.h_cos[2, 16] == pytest.approx(0.0, abs=1e-12)
        assert t.h_sin[2, 16] == pytest.approx(-1.0, abs=1e-12)

    def test_virtual_row_wraps_exactly(self):
        for w in (64, 1024):
            t = cprope_table(w, 32, 16, 4)
            c0, s0 = t.horizontal_row(0)
            cw, sw = t.horizontal_row(w)
            assert np.array_equal(c0, cw)
            assert np.array_equal(s0, sw)

    def test_seam_phase_step_constant(self):
        for w in (64, 1024):
            t = cprope_table(w, 32, 16, 4)
            for m in range(1, 33):
                step = 2 * np.pi * m / w
                ph = m * 2 * np.pi * np.arange(w) / w
                inner = np.diff(ph)
                wrap = (ph[0] + 2 * np.pi * m) - ph[-1]
                assert np.max(np.abs(inner - step)) < 1e-12
                assert abs(wrap - step) < 1e-12

    def test_unit_magnitude(self):
        t = cprope_table(128, 8, 32, 4)
        assert np.allclose(t.h_cos ** 2 + t.h_sin ** 2, 1.0, atol=1e-12)
        assert np.allclose(t.v_cos ** 2 + t.v_sin ** 2, 1.0, atol=1e-12)

    def test_vertical_schedule(self):
        t = cprope_table(64, 2, 32, 3)
        base = 10000.0
        for k in range(3):
            omega = base ** (-2 * k / 6)
            assert t.v_cos[k, 7] == pytest.approx(np.cos(omega * 7), abs=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            cprope_table(1, 4, 16, 4)
        with pytest.raises(ValueError):
            cprope_table(64, 0, 16, 4)

    def test_raw_serialization_roundtrip(self, tmp_path):
        from panotour.images import read_raw_raster
        t = cprope_table(32, 3, 16, 2)
        t.save_raw(tmp_path / "h.f32", tmp_path / "v.f32")
        h = read_raw_raster(tmp_path / "h.f32")
        assert h.shape == (6, 32)
        assert np.allclose(h[0], t.h_cos[0], atol=1e-7)
        assert np.allclose(h[1], t.h_sin[0], atol=1e-7)
