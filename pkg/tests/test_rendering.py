"""
Tests for Rendering Module.
"""

import math
from types import SimpleNamespace

import numpy as np
import pytest
import torch

import sys
sys.path.insert(0, 'src')

from sdf_param.deformation import DeformConfig, DeformModel
from sdf_param.nn import DTYPE
from sdf_param.rendering import (
    PSNR_SENTINEL,
    AppearanceConfig,
    AppearanceModel,
    Camera,
    DensityConfig,
    Ray,
    RenderSettings,
    camera_rays,
    compute_weights,
    density_from_sdf,
    foreground_chroma,
    integrate_ray,
    loss_rgb,
    loss_shading,
    psnr,
    radiance,
    render_image,
    sample_ray,
)
from sdf_param.sdf_fields import SphereSdf


@pytest.fixture
def bundle():
    """A sphere bundle with two objects and small networks."""
    deform = DeformModel(SphereSdf((0, 0, 0), 0.5), ["a", "b"], DeformConfig(2, 16, 2, 4))
    app = AppearanceModel(["a", "b"], AppearanceConfig(2, 16, 2, 2, 4), seed=0)
    return SimpleNamespace(deform=deform, appearance=app)


@pytest.fixture
def camera():
    """A 16x16 camera on +z looking at the origin."""
    return Camera.look_at((0, 0, 3), focal=20.0, width=16, height=16)


@pytest.fixture
def settings():
    """Coarse render settings."""
    return RenderSettings(n_samples=32, background=(1.0, 1.0, 1.0))


class ConstantOverride:
    """Material override returning one color everywhere."""

    def __init__(self, color):
        self.color = torch.tensor(color, dtype=DTYPE)

    def lookup(self, points):
        return self.color.expand(points.shape[0], 3)


class TestCamera:
    """Tests for cameras and ray generation."""

    def test_look_at_frame(self, camera):
        """Test that look_at builds a proper rotation."""
        assert np.allclose(camera.rotation.T @ camera.rotation, np.eye(3))
        assert np.linalg.det(camera.rotation) == pytest.approx(1.0)

    def test_central_rays_hit_target(self):
        """Test that the central pixel looks at the target."""
        cam = Camera.look_at((3, 0, 0), focal=10.0, width=1, height=1)
        _, dirs = camera_rays(cam)
        assert dirs[0].tolist() == pytest.approx([-1.0, 0.0, 0.0])

    def test_unit_directions(self, camera):
        """Test that every ray direction has unit length."""
        _, dirs = camera_rays(camera)
        assert torch.allclose(dirs.norm(dim=-1), torch.ones(256, dtype=DTYPE))

    def test_dict_round_trip(self, camera):
        """Test the serialized form."""
        back = Camera.from_dict(camera.to_dict())
        assert np.allclose(back.world_from_camera(), camera.world_from_camera())
        assert back.focal == camera.focal

    def test_invalid(self):
        """Test rejected cameras and rays."""
        with pytest.raises(ValueError):
            Camera(np.zeros(3), np.eye(3), focal=0.0, width=4, height=4)
        with pytest.raises(ValueError):
            Camera(np.zeros(3), np.diag([1.0, 1.0, -1.0]), focal=1.0, width=4, height=4)
        with pytest.raises(ValueError):
            Ray((0, 0, 0), (1, 1, 0), 0.0, 1.0)


class TestDensity:
    """Tests for the Laplace-CDF density."""

    def test_examples(self):
        """Test the three closed-form values."""
        cfg = DensityConfig(beta=0.02)
        assert cfg.alpha == pytest.approx(50.0)
        assert density_from_sdf(torch.tensor(0.0), cfg).item() == pytest.approx(25.0)
        assert density_from_sdf(torch.tensor(0.2), cfg).item() == pytest.approx(
            50.0 * 0.5 * math.exp(-10)
        )
        assert density_from_sdf(torch.tensor(-0.2), cfg).item() == pytest.approx(
            50.0 * (1 - 0.5 * math.exp(-10))
        )

    def test_monotone(self):
        """Test that density never increases with s."""
        s = torch.linspace(-1, 1, 401, dtype=DTYPE)
        sigma = density_from_sdf(s, DensityConfig())
        assert bool((sigma[1:] <= sigma[:-1]).all())

    def test_invalid(self):
        """Test that beta must be positive."""
        with pytest.raises(ValueError):
            DensityConfig(beta=0.0)


class TestSampling:
    """Tests for ray sampling."""

    def test_midpoints(self):
        """Test deterministic bin midpoints."""
        _, t, delta = sample_ray(Ray((0, 0, 0), (0, 0, 1), 0.0, 1.0), 4)
        assert t.tolist() == pytest.approx([0.125, 0.375, 0.625, 0.875])
        assert delta.tolist() == pytest.approx([0.25, 0.25, 0.25, 0.25])

    def test_delta_sum(self):
        """Test that intervals cover the ray span."""
        ray = Ray((0, 0, 0), (1, 0, 0), 0.5, 2.5)
        _, _, delta = sample_ray(ray, 16, stratified=True, seed=3)
        assert delta.sum().item() == pytest.approx(2.0)
        assert bool((delta > 0).all())

    def test_seeded_jitter(self):
        """Test identical jitter for the same seed."""
        ray = Ray((0, 0, 0), (0, 1, 0), 0.0, 1.0)
        a = sample_ray(ray, 8, True, seed=1)[1]
        b = sample_ray(ray, 8, True, seed=1)[1]
        c = sample_ray(ray, 8, True, seed=2)[1]
        assert torch.equal(a, b)
        assert not torch.equal(a, c)

    def test_too_few_samples(self):
        """Test n_samples >= 2."""
        with pytest.raises(ValueError):
            sample_ray(Ray((0, 0, 0), (0, 1, 0), 0.0, 1.0), 1)


class TestIntegration:
    """Tests for weights and compositing."""

    def test_empty_ray(self):
        """Test zero density returns the background."""
        _, w = compute_weights(torch.zeros(1, 8, dtype=DTYPE), torch.full((1, 8), 0.1, dtype=DTYPE))
        rgb, opacity = integrate_ray(w, torch.rand(1, 8, 3, dtype=DTYPE), (0.2, 0.3, 0.4))
        assert opacity.item() == 0.0
        assert rgb[0].tolist() == pytest.approx([0.2, 0.3, 0.4])

    def test_opaque_sample(self):
        """Test one opaque red sample."""
        sigma = torch.tensor([[1e6]], dtype=DTYPE)
        _, w = compute_weights(sigma, torch.tensor([[1.0]], dtype=DTYPE))
        rgb, opacity = integrate_ray(w, torch.tensor([[[1.0, 0.0, 0.0]]], dtype=DTYPE))
        assert opacity.item() == pytest.approx(1.0)
        assert rgb[0].tolist() == pytest.approx([1.0, 0.0, 0.0])

    def test_two_half_samples(self):
        """Test sigma * delta = ln 2 on two samples."""
        sigma = torch.full((1, 2), math.log(2), dtype=DTYPE)
        transparency, w = compute_weights(sigma, torch.ones(1, 2, dtype=DTYPE))
        assert transparency[0].tolist() == pytest.approx([1.0, 0.5])
        assert w[0].tolist() == pytest.approx([0.5, 0.25])
        r = torch.tensor([[[1.0, 0, 0], [0, 1.0, 0]]], dtype=DTYPE)
        rgb, _ = integrate_ray(w, r, (0.0, 0.0, 1.0))
        assert rgb[0].tolist() == pytest.approx([0.5, 0.25, 0.25])

    def test_weights_bounded(self):
        """Test sum of weights <= 1 for random densities."""
        gen = torch.Generator().manual_seed(0)
        sigma = torch.rand(50, 32, generator=gen, dtype=DTYPE) * 100
        _, w = compute_weights(sigma, torch.full((50, 32), 0.05, dtype=DTYPE))
        assert w.sum(dim=-1).max().item() <= 1.0 + 1e-12


class TestAppearance:
    """Tests for the material/shading decomposition."""

    def test_zero_shading_at_init(self, bundle):
        """Test that radiance equals material while shading is zero."""
        app = bundle.appearance
        p = torch.rand(8, 3, dtype=DTYPE)
        n = torch.nn.functional.normalize(torch.randn(8, 3, dtype=DTYPE), dim=-1)
        v = torch.nn.functional.normalize(torch.randn(8, 3, dtype=DTYPE), dim=-1)
        assert torch.equal(radiance(app, p, n, v, "a"), app.material(p, n, "a"))

    def test_material_times_exp_shading(self, bundle):
        """Test gray 0.5 material with ln 2 shading gives white."""
        app = bundle.appearance
        with torch.no_grad():
            app.f_mat.out.weight.zero_()
            app.f_mat.out.bias.zero_()
            app.f_shd.out.bias.fill_(math.log(2))
        p = torch.rand(4, 3, dtype=DTYPE)
        n = torch.tensor([[0.0, 0.0, 1.0]] * 4, dtype=DTYPE)
        out = radiance(app, p, n, n, "a")
        assert torch.allclose(out, torch.ones(4, 3, dtype=DTYPE))

    def test_material_ignores_view(self, bundle):
        """Test that the material network has no view input."""
        app = bundle.appearance
        p = torch.rand(4, 3, dtype=DTYPE)
        n = torch.tensor([[0.0, 1.0, 0.0]] * 4, dtype=DTYPE)
        a = radiance(app, p, n, n, "a") / torch.exp(app.shading(p, n, n, "a"))[:, None]
        assert app.f_mat.config.input_dim == app.pos_enc.output_dim() + 3 + 4
        assert torch.allclose(a, app.material(p, n, "a"))

    def test_material_range(self, bundle):
        """Test sigmoid-bounded material."""
        p = torch.randn(64, 3, dtype=DTYPE) * 5
        n = torch.nn.functional.normalize(torch.randn(64, 3, dtype=DTYPE), dim=-1)
        mat = bundle.appearance.material(p, n, "b")
        assert bool(((mat >= 0) & (mat <= 1)).all())


class TestLosses:
    """Tests for image-space losses and PSNR."""

    def test_loss_rgb(self):
        """Test the three mean absolute error examples."""
        gt = torch.rand(10, 3, dtype=DTYPE) * 0.5
        assert loss_rgb(gt, gt).item() == 0.0
        assert loss_rgb(gt + 0.1, gt).item() == pytest.approx(0.1)
        pred = gt.clone()
        pred[:5] += 0.2
        assert loss_rgb(pred, gt).item() == pytest.approx(0.1)

    def test_loss_rgb_mismatch(self):
        """Test that mismatched batches are rejected."""
        with pytest.raises(ValueError):
            loss_rgb(torch.zeros(3, 3), torch.zeros(4, 3))

    def test_loss_shading(self):
        """Test zero and constant shading."""
        assert loss_shading(torch.zeros(5, dtype=DTYPE)).item() == 0.0
        assert loss_shading(torch.full((5,), -0.3, dtype=DTYPE)).item() == pytest.approx(0.3)

    def test_psnr(self):
        """Test the sentinel and a known MSE."""
        img = np.random.default_rng(0).random((8, 8, 3))
        assert psnr(img, img) == PSNR_SENTINEL
        assert psnr(np.zeros((4, 4)), np.full((4, 4), 0.1)) == pytest.approx(20.0)


class TestRenderImage:
    """Tests for full-frame rendering."""

    def test_sphere_coverage(self, bundle, camera, settings):
        """Test an opaque center and a transparent corner."""
        image = render_image(bundle, camera, "a", settings)
        assert image.rgb.shape == (16, 16, 3)
        assert image.opacity[8, 8] > 0.99
        assert image.opacity[0, 0] < 0.01
        assert np.isfinite(image.rgb).all()

    def test_zero_shading_is_material(self, bundle, camera, settings):
        """Test that zeroed shading renders exactly the material buffer."""
        with torch.no_grad():
            bundle.appearance.f_shd.out.bias.fill_(0.3)
        image = render_image(bundle, camera, "a", settings, zero_shading=True)
        composite = image.material + (1.0 - image.opacity)[..., None] * np.ones(3)
        assert np.max(np.abs(image.rgb - composite)) == 0.0

    def test_empty_view(self, bundle, settings):
        """Test a camera looking away from the scene."""
        away = Camera.look_at((0, 0, 3), target=(0, 0, 6), focal=20.0, width=8, height=8)
        image = render_image(bundle, away, "a", settings)
        assert np.all(image.rgb == 1.0)
        assert np.all(image.opacity == 0.0)

    def test_red_override(self, bundle, camera, settings):
        """Test that a red material override dominates the foreground."""
        plain = render_image(bundle, camera, "a", settings)
        red = render_image(bundle, camera, "a", settings, texture_override=ConstantOverride([1, 0, 0]))
        fg = red.opacity > 0.5
        assert red.rgb[fg][:, 0].mean() > red.rgb[fg][:, 1].mean()
        assert red.rgb[fg][:, 0].mean() > red.rgb[fg][:, 2].mean()
        assert np.array_equal(plain.shading, red.shading)

    def test_shading_from_other_object(self, bundle, camera, settings):
        """Test that borrowing shading keeps the material buffer."""
        own = render_image(bundle, camera, "a", settings)
        borrowed = render_image(bundle, camera, "a", settings, shading_from="b")
        assert np.array_equal(own.material, borrowed.material)
        assert np.isfinite(borrowed.rgb).all()

    def test_resolution_override(self, bundle, camera, settings):
        """Test rendering at another resolution."""
        image = render_image(bundle, camera, "a", settings, resolution=8)
        assert image.rgb.shape == (8, 8, 3)

    def test_foreground_chroma(self):
        """Test chroma of a gray image."""
        img = np.full((2, 2, 3), 0.5)
        chroma = foreground_chroma(img, np.ones((2, 2), dtype=bool))
        assert chroma.tolist() == pytest.approx([1.0, 1.0, 1.0])
