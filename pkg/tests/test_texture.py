"""
Tests for Texture Atlas Module.
"""

from types import SimpleNamespace

import imageio.v2 as imageio
import numpy as np
import pytest
import torch

import sys
sys.path.insert(0, 'src')

from sdf_param.deformation import DeformConfig, DeformModel
from sdf_param.exceptions import AtlasMismatchError, ConfigError, FormatError
from sdf_param.mesh_ops import marching_cubes
from sdf_param.nn import DTYPE
from sdf_param.rendering import (
    AppearanceConfig,
    AppearanceModel,
    Camera,
    RenderSettings,
    foreground_chroma,
    psnr,
    render_image,
)
from sdf_param.sdf_fields import BoxParams, PolycubeParams, PolycubeSdf, SphereSdf
from sdf_param.texture import (
    TextureAtlas,
    assign_uv,
    bake_texture,
    domain_uv,
    load_atlas,
    save_atlas,
    transfer_texture,
    uv_to_domain,
)

SPHERE = {"type": "sphere", "center": [0.0, 0.0, 0.0], "radius": 0.5}
TWO_BOXES = {
    "type": "polycube",
    "boxes": [
        {"center": [-0.5, 0.0, 0.0], "half_extents": [0.2, 0.3, 0.25]},
        {"center": [0.5, 0.1, 0.0], "half_extents": [0.25, 0.2, 0.3]},
    ],
}


@pytest.fixture
def bundle():
    """Two objects on a sphere domain with a gently varying material."""
    deform = DeformModel(SphereSdf((0, 0, 0), 0.5), ["a", "b"], DeformConfig(2, 16, 2, 4))
    app = AppearanceModel(["a", "b"], AppearanceConfig(2, 16, 2, 2, 4), seed=0)
    with torch.no_grad():
        app.f_mat.out.weight.mul_(0.05)
    return SimpleNamespace(deform=deform, appearance=app)


@pytest.fixture
def camera():
    """A 16x16 camera on +z looking at the origin."""
    return Camera.look_at((0, 0, 3), focal=20.0, width=16, height=16)


@pytest.fixture
def settings():
    """Coarse render settings."""
    return RenderSettings(n_samples=32)


@pytest.fixture
def sphere_atlas():
    """A small random cubemap."""
    rng = np.random.default_rng(0)
    return TextureAtlas("sphere_cubemap", rng.random((6, 8, 8, 3)), SPHERE)


class TestDomainUv:
    """Tests for the point to chart mapping."""

    def test_axis_point(self):
        """Test the +x pole maps to the center of the +x chart."""
        chart, uv = domain_uv("sphere_cubemap", SPHERE, torch.tensor([[0.5, 0.0, 0.0]], dtype=DTYPE))
        assert chart.item() == 0
        assert uv[0].tolist() == [0.5, 0.5]
        assert int(uv[0, 0] * 256) == 128

    def test_face_order(self):
        """Test the dominant axis selects the chart."""
        points = torch.tensor(
            [[-0.5, 0, 0], [0, 0.5, 0], [0, -0.5, 0], [0, 0, 0.5], [0, 0, -0.5]], dtype=DTYPE
        )
        chart, _ = domain_uv("sphere_cubemap", SPHERE, points)
        assert chart.tolist() == [1, 2, 3, 4, 5]

    def test_cubemap_round_trip(self):
        """Test chart -> 3D -> chart is the identity away from seams."""
        gen = torch.Generator().manual_seed(0)
        d = torch.randn(10_000, 3, generator=gen, dtype=DTYPE)
        points = 0.5 * d / torch.linalg.norm(d, dim=-1, keepdim=True)
        chart, uv = domain_uv("sphere_cubemap", SPHERE, points)
        margin = 2 / 256
        inner = ((uv > margin) & (uv < 1 - margin)).all(dim=-1)
        back = uv_to_domain("sphere_cubemap", SPHERE, chart[inner], uv[inner])
        assert torch.allclose(back, points[inner], atol=1e-12)
        chart2, uv2 = domain_uv("sphere_cubemap", SPHERE, back)
        assert torch.equal(chart2, chart[inner])
        assert torch.allclose(uv2, uv[inner], atol=1e-12)

    def test_box_corners(self):
        """Test box corners land on chart corners."""
        box = {"type": "box", "center": [0, 0, 0], "half_extents": [1, 1, 1]}
        chart, uv = domain_uv("polycube_faces", box, torch.tensor([[1.0, 1.0, 1.0], [-1.0, -1.0, -1.0]], dtype=DTYPE))
        assert chart.tolist() == [0, 1]
        assert uv.tolist() == [[1.0, 1.0], [0.0, 0.0]]

    def test_polycube_round_trip(self):
        """Test chart -> 3D -> chart on two separated boxes."""
        gen = torch.Generator().manual_seed(1)
        chart = torch.randint(0, 12, (2000,), generator=gen)
        uv = 0.05 + 0.9 * torch.rand(2000, 2, generator=gen, dtype=DTYPE)
        points = uv_to_domain("polycube_faces", TWO_BOXES, chart, uv)
        chart2, uv2 = domain_uv("polycube_faces", TWO_BOXES, points)
        assert torch.equal(chart2, chart)
        assert torch.allclose(uv2, uv, atol=1e-12)
        field = PolycubeSdf.from_params(PolycubeParams.from_dict(TWO_BOXES), smooth=False)
        assert field.evaluate(points).abs().max().item() < 1e-12


class TestAtlas:
    """Tests for atlas validation and sampling."""

    def test_chart_count(self):
        """Test a cubemap must have six charts and a polycube 6k."""
        with pytest.raises(ValueError):
            TextureAtlas("sphere_cubemap", np.zeros((5, 8, 8, 3)), SPHERE)
        atlas = TextureAtlas("polycube_faces", np.zeros((12, 8, 8, 3)), TWO_BOXES)
        assert atlas.n_charts == 12

    def test_width_power_of_two(self):
        """Test the chart width."""
        with pytest.raises(ValueError):
            TextureAtlas("sphere_cubemap", np.zeros((6, 12, 12, 3)), SPHERE)

    def test_texel_centers_exact(self, sphere_atlas):
        """Test sampling at a texel center returns that texel."""
        uv = torch.tensor([[(3 + 0.5) / 8, (5 + 0.5) / 8]], dtype=DTYPE)
        out = sphere_atlas.sample(torch.tensor([2]), uv)
        assert out[0].tolist() == sphere_atlas.charts[2, 5, 3].tolist()

    def test_bilinear_midpoint(self, sphere_atlas):
        """Test halfway between two texels along u."""
        uv = torch.tensor([[4.0 / 8, 2.5 / 8]], dtype=DTYPE)
        out = sphere_atlas.sample(torch.tensor([1]), uv)
        expected = 0.5 * (sphere_atlas.charts[1, 2, 3] + sphere_atlas.charts[1, 2, 4])
        assert np.allclose(out[0].numpy(), expected)

    def test_check_domain(self, sphere_atlas):
        """Test layout mismatches raise and moved domains pass."""
        box_field = PolycubeSdf.from_params(PolycubeParams((BoxParams((0, 0, 0), (0.4, 0.4, 0.4)),)))
        with pytest.raises(AtlasMismatchError):
            sphere_atlas.check_domain(box_field)
        sphere_atlas.check_domain(SphereSdf((0, 0, 0), 0.45))


class TestBake:
    """Tests for baking and material overrides."""

    def test_constant_material(self, bundle):
        """Test a constant material bakes to a constant atlas."""
        with torch.no_grad():
            bundle.appearance.f_mat.out.weight.zero_()
            bundle.appearance.f_mat.out.bias.zero_()
        atlas = bake_texture(bundle, "a", width=8, supersampling=1)
        assert atlas.occupancy.all()
        assert np.allclose(atlas.charts, 0.5)

    def test_round_trip_psnr(self, bundle, camera, settings):
        """Test rendering with the baked atlas reproduces the network render."""
        atlas = bake_texture(bundle, "a", width=32, supersampling=2)
        plain = render_image(bundle, camera, "a", settings)
        baked = render_image(bundle, camera, "a", settings, texture_override=atlas)
        assert psnr(plain.rgb, baked.rgb) > 35.0
        assert np.array_equal(plain.shading, baked.shading)

    def test_red_atlas(self, bundle, camera, settings):
        """Test a constant red edit shifts the foreground toward red."""
        red = np.zeros((6, 8, 8, 3))
        red[..., 0] = 1.0
        atlas = TextureAtlas("sphere_cubemap", red, SPHERE)
        out = render_image(bundle, camera, "a", settings, texture_override=atlas)
        chroma = foreground_chroma(out.rgb, out.opacity > 0.5)
        assert chroma[0] > chroma[1] + 1.0 and chroma[0] > chroma[2] + 1.0

    def test_self_transfer(self, bundle, camera, settings):
        """Test transferring an atlas onto its own object."""
        atlas = bake_texture(bundle, "a", width=8, supersampling=1)
        direct = render_image(bundle, camera, "a", settings, texture_override=atlas)
        override = transfer_texture(bundle, atlas, "a")
        moved = render_image(bundle, camera, "a", settings, texture_override=override)
        assert np.array_equal(direct.rgb, moved.rgb)

    def test_transfer_keeps_target_shading(self, bundle, camera, settings):
        """Test the target keeps its own shading buffer."""
        with torch.no_grad():
            bundle.appearance.f_shd.out.bias.fill_(0.1)
        override = transfer_texture(bundle, "a", "b", width=8, supersampling=1)
        assert override.atlas.object_id == "a" and override.target == "b"
        plain = render_image(bundle, camera, "b", settings)
        moved = render_image(bundle, camera, "b", settings, texture_override=override)
        assert np.array_equal(plain.shading, moved.shading)

    def test_transfer_unknown_target(self, bundle, sphere_atlas):
        """Test an unknown target object."""
        with pytest.raises(ConfigError):
            transfer_texture(bundle, sphere_atlas, "c")

    def test_transfer_domain_mismatch(self, bundle):
        """Test an atlas for another domain layout."""
        atlas = TextureAtlas("polycube_faces", np.zeros((12, 8, 8, 3)), TWO_BOXES)
        with pytest.raises(AtlasMismatchError):
            transfer_texture(bundle, atlas, "a")


class TestAtlasFiles:
    """Tests for atlas directories."""

    def test_round_trip(self, tmp_path, sphere_atlas):
        """Test charts and masks survive a save and load."""
        sphere_atlas.occupancy[0, 0, 0] = False
        save_atlas(sphere_atlas, tmp_path)
        assert (tmp_path / "chart_sphere_cubemap_0.png").exists()
        assert (tmp_path / "occupancy_sphere_cubemap_5.png").exists()
        loaded = load_atlas(tmp_path)
        assert loaded.kind == "sphere_cubemap"
        assert np.allclose(loaded.charts, sphere_atlas.charts, atol=0.5 / 255 + 1e-12)
        assert np.array_equal(loaded.occupancy, sphere_atlas.occupancy)

    def test_edited_chart(self, tmp_path, sphere_atlas):
        """Test an externally repainted chart is read back as-is."""
        save_atlas(sphere_atlas, tmp_path)
        paint = np.zeros((8, 8, 3), dtype=np.uint8)
        paint[..., 0] = 255
        imageio.imwrite(tmp_path / "chart_sphere_cubemap_4.png", paint)
        loaded = load_atlas(tmp_path / "atlas.yaml")
        assert np.all(loaded.charts[4] == np.array([1.0, 0.0, 0.0]))

    def test_missing_chart(self, tmp_path, sphere_atlas):
        """Test a deleted chart image."""
        save_atlas(sphere_atlas, tmp_path)
        (tmp_path / "chart_sphere_cubemap_3.png").unlink()
        with pytest.raises(FormatError):
            load_atlas(tmp_path)

    def test_wrong_size(self, tmp_path, sphere_atlas):
        """Test a chart resized by an editor."""
        save_atlas(sphere_atlas, tmp_path)
        imageio.imwrite(tmp_path / "chart_sphere_cubemap_1.png", np.zeros((4, 4, 3), dtype=np.uint8))
        with pytest.raises(FormatError):
            load_atlas(tmp_path)


class TestAssignUv:
    """Tests for per-vertex chart coordinates."""

    def test_sphere_mesh(self):
        """Test every vertex of a sphere mesh gets a chart and uv."""
        mesh = assign_uv(marching_cubes(SphereSdf((0, 0, 0), 0.5), 16), "sphere_cubemap", SPHERE)
        assert set(np.unique(mesh.chart).tolist()) == set(range(6))
        assert mesh.uv.min() >= 0.0 and mesh.uv.max() <= 1.0
