import numba
import numpy as np
import pytest

from bsplat.rasterizer import (
    gaussian_alpha, inv_covariance, render, render_bruteforce,
)
from bsplat.splat_sampler import Gaussian2D, SplatBatch

from conftest import random_gaussians


def one_gaussian(center, sx=1.0, sy=1.0, theta=0.0, color=(1, 0, 0),
                 opacity=0.9, depth=0.0, parent=(0, 0, 0)):
    return Gaussian2D(center=np.asarray(center, float), sigma_x=sx, sigma_y=sy,
                      theta=theta, color=np.asarray(color, float),
                      opacity=opacity, depth=depth, parent=parent)


class TestInvCovariance:
    def test_axis_aligned(self):
        sinv = inv_covariance(2.0, 1.0, 0.0)
        assert np.allclose(sinv, np.diag([0.25, 1.0]), atol=1e-14)

    def test_quarter_turn_swaps_axes(self):
        sinv = inv_covariance(2.0, 1.0, np.pi / 2)
        assert np.allclose(sinv, np.diag([1.0, 0.25]), atol=1e-12)

    def test_isotropic_rotation_invariant(self):
        for th in (0.0, np.pi / 4, 1.1, 2.7):
            assert np.allclose(inv_covariance(1.0, 1.0, th), np.eye(2), atol=1e-12)

    def test_matches_numeric_inverse(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            sx, sy = rng.uniform(0.3, 5, 2)
            th = rng.uniform(0, 2 * np.pi)
            c, s = np.cos(th), np.sin(th)
            r = np.array([[c, -s], [s, c]])
            cov = r @ np.diag([sx**2, sy**2]) @ r.T
            assert np.allclose(inv_covariance(sx, sy, th), np.linalg.inv(cov),
                               rtol=1e-9, atol=1e-12)


class TestGaussianAlpha:
    def test_at_center(self):
        g = one_gaussian([4.0, 4.0], opacity=0.7)
        assert gaussian_alpha(g, [4.0, 4.0]) == pytest.approx(0.7, abs=1e-12)

    def test_one_sigma_along_axis(self):
        g = one_gaussian([0.0, 0.0], sx=2.0, sy=1.0, opacity=0.8)
        a = gaussian_alpha(g, [2.0, 0.0])
        assert a == pytest.approx(0.8 * np.exp(-0.5), abs=1e-12)

    def test_zero_opacity(self):
        g = one_gaussian([0.0, 0.0], opacity=0.0)
        assert gaussian_alpha(g, [3.0, 1.0]) == 0.0

    def test_alpha_max_clamp(self):
        g = one_gaussian([0.0, 0.0], opacity=1.0)
        assert gaussian_alpha(g, [0.0, 0.0]) == pytest.approx(0.99)


class TestRender:
    def test_empty_batch_is_background(self):
        batch = SplatBatch.from_gaussians([])
        buf = render(batch, 32, 24, background=(0.2, 0.4, 0.6))
        assert np.allclose(buf.color, [0.2, 0.4, 0.6])
        assert np.allclose(buf.transmittance, 1.0)
        assert np.all(buf.contrib_count == 0)

    def test_opaque_front_occludes(self):
        front = one_gaussian([8.5, 8.5], sx=3, sy=3, color=(1, 0, 0),
                             opacity=1.0, depth=0.0, parent=(0, 0, 0))
        back = one_gaussian([8.5, 8.5], sx=3, sy=3, color=(0, 0, 1),
                            opacity=1.0, depth=1.0, parent=(1, 0, 0))
        batch = SplatBatch.from_gaussians([back, front])
        buf = render(batch, 17, 17, background=(1, 1, 1))
        px = buf.color[8, 8]
        assert px[0] > 0.98
        assert px[2] < 0.02

    def test_two_coincident_half_alpha(self):
        # front alpha 0.5 red over back alpha 0.5 blue on black:
        # C = 0.5 red + 0.5 * 0.25 ... = 0.5 red + 0.25 blue
        front = one_gaussian([8.5, 8.5], sx=4, sy=4, color=(1, 0, 0),
                             opacity=0.5, depth=0.0, parent=(0, 0, 0))
        back = one_gaussian([8.5, 8.5], sx=4, sy=4, color=(0, 0, 1),
                            opacity=0.5, depth=1.0, parent=(1, 0, 0))
        batch = SplatBatch.from_gaussians([front, back])
        buf = render(batch, 17, 17, background=(0, 0, 0))
        px = buf.color[8, 8]
        assert px[0] == pytest.approx(0.5, abs=1e-9)
        assert px[2] == pytest.approx(0.25, abs=1e-9)
        assert buf.transmittance[8, 8] == pytest.approx(0.25, abs=1e-9)

    def test_color_is_background_blend_identity(self):
        rng = np.random.default_rng(2)
        batch = random_gaussians(rng, 40, 48, 48)
        bg = np.array([0.3, 0.5, 0.9])
        buf = render(batch, 48, 48, background=bg)
        bf = render_bruteforce(batch, 48, 48, background=bg)
        # transmittance consistent between both renderers
        assert np.allclose(buf.transmittance, bf.transmittance, atol=1e-5)


class TestOracleEquivalence:
    @pytest.mark.parametrize("seed", range(8))
    def test_tiled_matches_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        batch = random_gaussians(rng, int(rng.integers(1, 128)), 64, 64)
        buf = render(batch, 64, 64)
        bf = render_bruteforce(batch, 64, 64)
        assert np.abs(buf.color - bf.color).max() < 1e-5

    def test_off_canvas_gaussian_is_background(self):
        g = one_gaussian([-30.0, -30.0], sx=2, sy=2, opacity=1.0)
        batch = SplatBatch.from_gaussians([g])
        buf = render(batch, 32, 32)
        assert np.abs(buf.color - 1.0).max() < 1e-7

    def test_bruteforce_empty(self):
        buf = render_bruteforce(SplatBatch.from_gaussians([]), 16, 16,
                                background=(0, 0.5, 1))
        assert np.allclose(buf.color, [0, 0.5, 1])


class TestInvariants:
    def test_transmittance_in_unit_range(self, rng):
        batch = random_gaussians(rng, 120, 64, 64)
        buf = render(batch, 64, 64)
        assert buf.transmittance.min() >= 0.0
        assert buf.transmittance.max() <= 1.0

    def test_convex_combination_bound(self, rng):
        batch = random_gaussians(rng, 150, 64, 64, opacity=(0.3, 1.0))
        buf = render(batch, 64, 64, background=(0.0, 0.5, 1.0))
        assert buf.color.min() >= -1e-9
        assert buf.color.max() <= 1.0 + 1e-9

    def test_quarter_turn_equivariance(self, rng):
        n = 48
        batch = random_gaussians(rng, 40, n, n)
        c = n / 2.0
        rot = SplatBatch(
            centers=np.stack([n - batch.centers[:, 1], batch.centers[:, 0]], axis=1),
            sigma_x=batch.sigma_x.copy(), sigma_y=batch.sigma_y.copy(),
            theta=batch.theta + np.pi / 2, color=batch.color.copy(),
            opacity=batch.opacity.copy(), depth=batch.depth.copy(),
            curve_id=batch.curve_id, row=batch.row, col=batch.col)
        img = render(batch, n, n).color
        img_rot = render(rot, n, n).color
        assert np.abs(img_rot - np.rot90(img, k=-1, axes=(0, 1))).max() < 1e-5

    def test_deterministic_across_runs_and_threads(self, rng):
        batch = random_gaussians(rng, 100, 64, 64)
        buf1 = render(batch, 64, 64)
        buf2 = render(batch, 64, 64)
        assert np.array_equal(buf1.color, buf2.color)
        before = numba.get_num_threads()
        try:
            numba.set_num_threads(1)
            single = render(batch, 64, 64)
        finally:
            numba.set_num_threads(before)
        assert np.array_equal(buf1.color, single.color)
        assert np.array_equal(buf1.transmittance, single.transmittance)
        assert np.array_equal(buf1.term_pos, single.term_pos)
