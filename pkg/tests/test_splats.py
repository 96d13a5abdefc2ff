import numpy as np
import pytest

from panotour.geometry import (PanoPose, quat_from_axis_angle, quat_identity,
                               quat_to_mat)
from panotour.images import PanoImage
from panotour.splats import (SH_C0, SH_C1, GaussianArrays, GaussianPrimitive,
                             dc_from_rgb, lift_pano, load_gaussians,
                             render_pano, save_gaussians, sh_eval,
                             sh_eval_many)


def make_gaussian(mu, alpha=0.9, sigma=0.05, rgb=(0.5, 0.5, 0.5), room=0,
                  src_dir=(1.0, 0.0, 0.0), q=None, linear=None):
    sh = np.zeros((3, 4))
    sh[:, 0] = dc_from_rgb(np.asarray(rgb))
    if linear is not None:
        sh[:, 1:] = linear
    return GaussianPrimitive(
        mu=np.asarray(mu, dtype=float), q=quat_identity() if q is None else q,
        sigma=np.full(3, sigma) if np.isscalar(sigma) else np.asarray(sigma),
        alpha=alpha, sh=sh, src_node=0,
        src_dir=np.asarray(src_dir, dtype=float), room=room)


def textbook_sh1(sh, d):
    """Independent degree-1 evaluation from the real SH basis functions."""
    y00 = 0.5 * np.sqrt(1.0 / np.pi)
    y1 = 0.5 * np.sqrt(3.0 / np.pi)
    out = sh[:, 0] * y00 + sh[:, 1] * (-y1 * d[1]) + sh[:, 2] * (y1 * d[2]) \
        + sh[:, 3] * (-y1 * d[0])
    return np.clip(out, 0.0, 1.0)


class TestShEval:
    def test_zero_linear_gives_dc(self, rng):
        for _ in range(5):
            rgb = rng.random(3)
            g = make_gaussian([0, 0, 0], rgb=rgb)
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            assert np.allclose(sh_eval(g.sh, d), rgb, atol=1e-12)

    def test_opposite_direction_flips_linear(self, rng):
        sh = np.zeros((3, 4))
        sh[:, 0] = dc_from_rgb([0.5, 0.5, 0.5])
        sh[:, 1:] = rng.normal(size=(3, 3)) * 0.1
        d = np.array([0.0, 1.0, 0.0])
        up = sh_eval(sh, d) - 0.5
        dn = sh_eval(sh, -d) - 0.5
        assert np.allclose(up, -dn, atol=1e-12)

    def test_matches_textbook_basis(self, rng):
        for _ in range(20):
            sh = rng.normal(size=(3, 4)) * 0.4
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            assert np.allclose(sh_eval(sh, d), textbook_sh1(sh, d), atol=1e-12)

    def test_constants(self):
        assert SH_C0 == pytest.approx(0.5 * np.sqrt(1.0 / np.pi), abs=1e-15)
        assert SH_C1 == pytest.approx(0.5 * np.sqrt(3.0 / np.pi), abs=1e-15)


class TestRenderPano:
    def test_empty_cache(self):
        rr = render_pano([], PanoPose(np.zeros(3)), 64, 32, background=(7, 8, 9))
        assert not rr.image.valid.any()
        assert np.all(rr.alpha == 0.0)
        assert np.all(rr.image.color == np.array([7, 8, 9], dtype=np.uint8))

    def test_single_gaussian_center(self):
        # center the splat on an exact pixel ray so the closest-point offset
        # is zero and the response equals alpha
        from panotour.panocam import pixel_direction
        y, x = 16, 32
        d = pixel_direction(x, y, 64, 32)
        g = make_gaussian(2.0 * d, alpha=0.99, sigma=0.05, rgb=(0.8, 0.4, 0.2))
        rr = render_pano([g], PanoPose(np.zeros(3)), 64, 32)
        assert 1.95 <= rr.image.depth[y, x] <= 2.05
        got = rr.image.color[y, x].astype(float) / 255.0
        # unnormalized compositing scales the color by alpha = 0.99
        assert np.allclose(got, 0.99 * np.array([0.8, 0.4, 0.2]), atol=0.01)
        assert rr.image.valid[y, x]

    def test_two_gaussians_compositing_formula(self):
        from panotour.panocam import pixel_direction
        y, x = 16, 32
        dirv = pixel_direction(x, y, 64, 32)
        ga = make_gaussian(1.0 * dirv, alpha=0.9, sigma=0.03, rgb=(1.0, 0.0, 0.0))
        gb = make_gaussian(2.0 * dirv, alpha=0.8, sigma=0.03, rgb=(0.0, 1.0, 0.0))
        rr = render_pano([ga, gb], PanoPose(np.zeros(3)), 64, 32)

        def resp(g):
            t = dirv @ g.mu
            dist2 = max(g.mu @ g.mu - t * t, 0.0)
            return g.alpha * np.exp(-0.5 * dist2 / g.sigma[0] ** 2), t
        g1, t1 = resp(ga)
        g2, t2 = resp(gb)
        assert g1 == pytest.approx(0.9, abs=1e-12)
        assert g2 == pytest.approx(0.8, abs=1e-12)
        w1, w2 = g1, g2 * (1 - g1)
        expect_color = w1 * np.array([1.0, 0, 0]) + w2 * np.array([0, 1.0, 0])
        assert np.allclose(rr.color_float[y, x], expect_color, atol=1e-9)
        expect_depth = (w1 * t1 + w2 * t2) / (w1 + w2)
        assert rr.image.depth[y, x] == pytest.approx(expect_depth, abs=1e-9)
        assert rr.alpha[y, x] == pytest.approx(w1 + w2, abs=1e-12)

    def test_weights_sum_bounded(self, rng):
        gs = [make_gaussian(rng.uniform(-3, 3, 3), alpha=float(rng.uniform(0.5, 1.0)),
                            sigma=float(rng.uniform(0.05, 0.4)))
              for _ in range(200)]
        rr = render_pano(gs, PanoPose(np.zeros(3)), 64, 32)
        assert rr.alpha.max() <= 1.0 + 1e-9

    def test_depth_within_contributor_range(self):
        from panotour.panocam import pixel_direction
        y, x = 16, 32
        d = pixel_direction(x, y, 64, 32)
        ga = make_gaussian(1.0 * d, sigma=0.05)
        gb = make_gaussian(2.5 * d, sigma=0.05)
        rr = render_pano([ga, gb], PanoPose(np.zeros(3)), 64, 32)
        assert 1.0 - 1e-6 <= rr.image.depth[y, x] <= 2.5 + 1e-6

    def test_rotation_invariance(self, rng):
        gs = [make_gaussian(rng.uniform(-2, 2, 3) + [3, 0, 0],
                            sigma=float(rng.uniform(0.05, 0.2)),
                            rgb=rng.random(3),
                            q=quat_from_axis_angle(rng.normal(size=3), 0.5))
              for _ in range(40)]
        pose = PanoPose(np.array([0.2, -0.1, 0.05]))
        rr1 = render_pano(gs, pose, 64, 32)
        q = quat_from_axis_angle([0.0, 0.0, 1.0], 2 * np.pi / 3)
        R = quat_to_mat(q)
        from panotour.geometry import quat_mul
        gs2 = []
        for g in gs:
            q2 = quat_mul(q, g.q)
            q2 /= np.linalg.norm(q2)
            gs2.append(GaussianPrimitive(
                mu=R @ g.mu, q=q2, sigma=g.sigma, alpha=g.alpha, sh=g.sh,
                src_node=g.src_node, src_dir=R @ g.src_dir, room=g.room))
        rr2 = render_pano(gs2, pose.rotated(q), 64, 32)
        assert np.allclose(rr1.color_float, rr2.color_float, atol=1e-6)

    def test_anisotropic_rotation_matters(self):
        # a flat pancake seen edge-on vs face-on responds differently
        q_face = quat_identity()
        q_edge = quat_from_axis_angle([0, 1, 0], np.pi / 2)
        flat = np.array([0.001, 0.3, 0.3])
        ga = make_gaussian([2.0, 0, 0], sigma=flat, q=q_face)
        gb = make_gaussian([2.0, 0, 0], sigma=flat, q=q_edge)
        ra = render_pano([ga], PanoPose(np.zeros(3)), 64, 32)
        rb = render_pano([gb], PanoPose(np.zeros(3)), 64, 32)
        assert ra.image.valid.sum() != rb.image.valid.sum()

    def test_memory_image_unpremultiplies(self):
        g = make_gaussian([2.0, 0.0, 0.0], alpha=0.7, sigma=0.2, rgb=(1.0, 1.0, 1.0))
        rr = render_pano([g], PanoPose(np.zeros(3)), 64, 32)
        y, x = 16, 32
        mem = rr.memory_image()
        assert mem.color[y, x, 0] == 255  # 0.7 / 0.7 -> full white
        assert rr.image.color[y, x, 0] < 200  # raw composite is premultiplied


class TestLiftPano:
    def make_pano(self, w=64, h=32, depth=2.0, color=(100, 150, 200)):
        c = np.zeros((h, w, 3), dtype=np.uint8)
        c[:] = color
        d = np.full((h, w), depth)
        return PanoImage(c, depth=d)

    def test_counting(self):
        pano = self.make_pano()
        out = lift_pano(pano, PanoPose(np.zeros(3)), 4, room=0)
        assert len(out) == 16 * 8

    def test_all_invalid_empty(self):
        pano = self.make_pano()
        pano.valid[:] = False
        assert lift_pano(pano, PanoPose(np.zeros(3)), 4, room=0) == []

    def test_invalid_marker_color_skipped(self):
        pano = self.make_pano(color=(255, 255, 255))
        assert lift_pano(pano, PanoPose(np.zeros(3)), 4, room=0) == []

    def test_unprojection_single_pixel(self):
        pano = self.make_pano(depth=2.0)
        pano.valid[:] = False
        pano.valid[16, 32] = True
        pose = PanoPose(np.array([1.0, 2.0, 1.5]))
        out = lift_pano(pano, pose, 1, room=3, src_node=9)
        assert len(out) == 1
        g = out[0]
        from panotour.panocam import pixel_direction
        d = pose.matrix @ pixel_direction(32, 16, 64, 32)
        assert np.allclose(g.mu, pose.position + 2.0 * d, atol=1e-12)
        assert np.allclose(g.src_dir, d, atol=1e-12)
        assert g.room == 3 and g.src_node == 9
        assert g.alpha == 0.9
        # sigma = depth * (2 pi / width) * stride * k_sigma
        assert g.sigma[0] == pytest.approx(2.0 * (2 * np.pi / 64) * 1 * 0.7)
        assert np.allclose(sh_eval(g.sh, d) * 255,
                           [100, 150, 200], atol=0.51)

    def test_missing_depth_rejected(self):
        pano = PanoImage(np.zeros((32, 64, 3), dtype=np.uint8))
        with pytest.raises(ValueError, match="depth"):
            lift_pano(pano, PanoPose(np.zeros(3)), 1, room=0)

    def test_stride_validation(self):
        with pytest.raises(ValueError):
            lift_pano(self.make_pano(), PanoPose(np.zeros(3)), 0, room=0)


class TestBinaryIO:
    def test_roundtrip(self, tmp_path, rng):
        gs = []
        for i in range(50):
            q = rng.normal(size=4)
            q /= np.linalg.norm(q)
            sh = rng.normal(size=(3, 4)) * 0.3
            gs.append(GaussianPrimitive(
                mu=rng.uniform(-5, 5, 3), q=q,
                sigma=rng.uniform(0.01, 0.5, 3), alpha=float(rng.uniform(0, 1)),
                sh=sh, src_node=int(rng.integers(0, 100)),
                src_dir=np.array([0.0, 0.0, 1.0]), room=int(rng.integers(0, 8))))
        path = tmp_path / "cache.bin"
        save_gaussians(path, gs)
        back = load_gaussians(path)
        assert len(back) == 50
        for a, b in zip(gs, back):
            assert np.allclose(a.mu, b.mu, atol=1e-5)
            assert np.allclose(a.sh, b.sh, atol=1e-5)
            assert abs(np.linalg.norm(b.q) - 1.0) < 1e-9
            assert a.src_node == b.src_node and a.room == b.room

    def test_header_size_and_magic(self, tmp_path):
        path = tmp_path / "c.bin"
        save_gaussians(path, [])
        data = path.read_bytes()
        assert len(data) == 16
        with pytest.raises(IOError, match="not a gaussian cache"):
            (tmp_path / "bad.bin").write_bytes(b"\x00" * 16)
            load_gaussians(tmp_path / "bad.bin")

    def test_record_size(self):
        from panotour.splats import GAUSSIAN_DTYPE
        assert GAUSSIAN_DTYPE.itemsize == 112  # 28 fields x 4 bytes

    def test_accepts_arrays(self, tmp_path):
        g = make_gaussian([1, 2, 3])
        save_gaussians(tmp_path / "a.bin", GaussianArrays.from_list([g]))
        assert len(load_gaussians(tmp_path / "a.bin")) == 1


class TestPrimitiveValidation:
    def test_bad_sigma(self):
        with pytest.raises(ValueError):
            make_gaussian([0, 0, 0], sigma=-0.1)

    def test_bad_alpha(self):
        with pytest.raises(ValueError):
            make_gaussian([0, 0, 0], alpha=1.5)

    def test_non_unit_quaternion(self):
        with pytest.raises(ValueError):
            make_gaussian([0, 0, 0], q=np.array([2.0, 0, 0, 0]))

    def test_sigma_bar(self):
        g = make_gaussian([0, 0, 0], sigma=np.array([0.1, 0.2, 0.3]))
        assert g.sigma_bar == pytest.approx(0.2)
