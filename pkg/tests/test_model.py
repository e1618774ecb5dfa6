"""
Tests for Parameterization Model Module.
"""

import numpy as np
import pytest
import torch

import sys
sys.path.insert(0, 'src')

from sdf_param.deformation import DeformConfig
from sdf_param.exceptions import ConfigError, FormatError
from sdf_param.mesh_ops import marching_cubes
from sdf_param.model import (
    ParamModel,
    build_param_model,
    load_domain,
    load_model,
    save_domain,
    save_model,
    swap_domain,
)
from sdf_param.nn import DTYPE
from sdf_param.rendering import AppearanceConfig, Camera, RenderSettings, render_image
from sdf_param.sdf_fields import (
    BoxParams,
    PolycubeParams,
    PolycubeSdf,
    SphereSdf,
    scale_field,
)


DEFORM = DeformConfig(depth=2, width=16, pos_frequencies=2, code_dim=4)
APPEARANCE = AppearanceConfig(depth=2, width=16, pos_frequencies=2, view_frequencies=1, code_dim=4)
SETTINGS = RenderSettings(n_samples=16)


@pytest.fixture
def polycube():
    """Two overlapping boxes along x."""
    return PolycubeSdf.from_params(
        PolycubeParams(
            (
                BoxParams((-0.2, 0.0, 0.0), (0.3, 0.3, 0.3)),
                BoxParams((0.3, 0.0, 0.0), (0.2, 0.2, 0.2)),
            )
        )
    )


@pytest.fixture
def bundle(polycube):
    """A small bundle with deformation and appearance networks."""
    return build_param_model(
        polycube, ["cup", "vase"], DEFORM, APPEARANCE, seed=3, config={"note": "test"}
    )


@pytest.fixture
def camera():
    """A tiny frontal camera."""
    return Camera.look_at((0.0, 0.0, 3.0), focal=10.0, width=8, height=8)


def perturb(bundle, scale=0.05, seed=1):
    """Move every parameter away from its initialization."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in bundle.parameters():
            p.add_(scale * torch.randn(p.shape, generator=gen, dtype=DTYPE))


class TestBuildParamModel:
    """Test bundle construction."""

    def test_builds_both_model_parts(self, bundle, polycube):
        """Test a fresh bundle carries deformation and appearance networks."""
        assert isinstance(bundle, ParamModel)
        assert bundle.domain is polycube
        assert bundle.object_ids == ["cup", "vase"]
        assert bundle.appearance is not None
        assert bundle.config == {"note": "test"}

    def test_maps_start_as_identity(self, bundle):
        """Test both maps are the identity before training."""
        p = torch.rand(20, 3, dtype=DTYPE) * 2 - 1
        with torch.no_grad():
            assert torch.equal(bundle.deform.forward_map(p, "cup"), p)
            assert torch.equal(bundle.deform.inverse_map(p, "vase"), p)

    def test_geometry_bundle_has_no_appearance(self, polycube):
        """Test appearance can be omitted and is then reported missing."""
        bundle = build_param_model(polycube, ["a"], DEFORM, with_appearance=False)
        assert bundle.appearance is None
        with pytest.raises(ConfigError):
            bundle.require_appearance()

    def test_requires_object_ids(self, polycube):
        """Test an empty object list is rejected."""
        with pytest.raises(ValueError):
            build_param_model(polycube, [], DEFORM)

    def test_check_object(self, bundle):
        """Test unknown object ids raise a config error."""
        assert bundle.check_object("cup") == "cup"
        with pytest.raises(ConfigError):
            bundle.check_object("teapot")

    def test_parameters_cover_all_networks(self, bundle):
        """Test the trainable set includes appearance tensors."""
        n_deform = len(list(bundle.deform.parameters()))
        assert len(bundle.parameters()) > n_deform
        names = list(bundle.tensors())
        assert any(name.startswith("deform.f_def.") for name in names)
        assert any(name.startswith("appearance.f_shd.") for name in names)


class TestSaveLoadModel:
    """Test checkpointing a bundle."""

    def test_round_trip_restores_tensors(self, bundle, tmp_path):
        """Test every tensor is restored exactly."""
        perturb(bundle)
        save_model(bundle, tmp_path / "ckpt")
        loaded = load_model(tmp_path / "ckpt")

        original = bundle.tensors()
        restored = loaded.bundle.tensors()
        assert set(original) == set(restored)
        for name, tensor in original.items():
            assert torch.equal(tensor, restored[name]), name

    def test_round_trip_preserves_outputs(self, bundle, tmp_path, camera):
        """Test the reloaded bundle maps and renders identically."""
        perturb(bundle)
        save_model(bundle, tmp_path / "ckpt")
        loaded = load_model(tmp_path / "ckpt").bundle

        p = torch.rand(30, 3, dtype=DTYPE) * 2 - 1
        with torch.no_grad():
            assert torch.equal(
                bundle.deform.forward_map(p, "cup"), loaded.deform.forward_map(p, "cup")
            )
        a = render_image(bundle, camera, "vase", SETTINGS)
        b = render_image(loaded, camera, "vase", SETTINGS)
        assert np.array_equal(a.rgb, b.rgb)

    def test_epoch_and_config_metadata(self, bundle, tmp_path):
        """Test extra metadata and the run config come back."""
        save_model(bundle, tmp_path / "ckpt", extra={"epoch": 7})
        loaded = load_model(tmp_path / "ckpt")
        assert loaded.epoch == 7
        assert loaded.bundle.config == {"note": "test"}
        assert loaded.bundle.seed == 3
        assert (tmp_path / "ckpt" / "domain.yaml").exists()

    def test_geometry_bundle_round_trip(self, polycube, tmp_path):
        """Test a bundle without appearance reloads without appearance."""
        bundle = build_param_model(polycube, ["a"], DEFORM, with_appearance=False)
        save_model(bundle, tmp_path / "ckpt")
        assert load_model(tmp_path / "ckpt").bundle.appearance is None

    def test_missing_metadata_is_format_error(self, tmp_path):
        """Test a plain checkpoint without model metadata is rejected."""
        from sdf_param.checkpoint import save_checkpoint

        save_checkpoint(tmp_path / "bare", {"x": torch.zeros(2, dtype=DTYPE)}, {}, 0)
        with pytest.raises(FormatError):
            load_model(tmp_path / "bare")


class TestDomainFiles:
    """Test domain file persistence."""

    def test_polycube_round_trip(self, polycube, tmp_path):
        """Test a saved polycube domain evaluates identically after loading."""
        path = save_domain(polycube, tmp_path / "domain.yaml")
        loaded = load_domain(path)
        p = torch.rand(50, 3, dtype=DTYPE) * 2 - 1
        assert torch.allclose(loaded.evaluate(p), polycube.evaluate(p))

    def test_bare_descriptor_is_accepted(self, tmp_path):
        """Test a file holding just the descriptor loads."""
        from sdf_param.utils import write_yaml

        write_yaml(SphereSdf((0, 0, 0), 0.4).descriptor(), tmp_path / "sphere.yaml")
        loaded = load_domain(tmp_path / "sphere.yaml")
        assert float(loaded.evaluate(torch.zeros(1, 3, dtype=DTYPE))[0]) == pytest.approx(-0.4)

    def test_missing_file(self, tmp_path):
        """Test a missing domain file raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            load_domain(tmp_path / "nope.yaml")

    def test_not_a_descriptor(self, tmp_path):
        """Test a YAML file without a descriptor is a format error."""
        from sdf_param.utils import write_yaml

        write_yaml({"something": 1}, tmp_path / "bad.yaml")
        with pytest.raises(FormatError):
            load_domain(tmp_path / "bad.yaml")


class TestSwapDomain:
    """Test domain-swap edits."""

    def test_same_domain_renders_identically(self, bundle, camera):
        """Test swapping in the same domain changes nothing."""
        perturb(bundle)
        swapped = swap_domain(bundle, bundle.domain)
        a = render_image(bundle, camera, "cup", SETTINGS)
        b = render_image(swapped, camera, "cup", SETTINGS)
        assert np.array_equal(a.rgb, b.rgb)

    def test_swap_shares_networks(self, bundle, polycube):
        """Test the swapped bundle shares parameters and leaves the original alone."""
        shrunk = scale_field(polycube, 0.9)
        swapped = swap_domain(bundle, shrunk)
        assert swapped.domain is shrunk
        assert bundle.domain is polycube
        assert swapped.deform.f_def is bundle.deform.f_def
        assert swapped.appearance is bundle.appearance

    def test_shrunk_domain_gives_contained_mesh(self, bundle, polycube):
        """Test a domain scaled by 0.9 yields a surface inside the original."""
        original = marching_cubes(bundle.deform.composed_field("cup"), 32)
        swapped = swap_domain(bundle, scale_field(polycube, 0.9))
        shrunk = marching_cubes(swapped.deform.composed_field("cup"), 32)

        assert not shrunk.is_empty
        lo, hi = original.bounds()
        s_lo, s_hi = shrunk.bounds()
        assert np.all(s_lo >= lo - 1e-6)
        assert np.all(s_hi <= hi + 1e-6)
        assert shrunk.total_area() < original.total_area()

    def test_removed_box_still_renders(self, bundle, polycube, camera):
        """Test dropping a polycube box gives a nonempty mesh and a finite image."""
        edited = PolycubeSdf.from_params(polycube.params().without_box(1))
        swapped = swap_domain(bundle, edited)
        mesh = marching_cubes(swapped.deform.composed_field("vase"), 32)
        assert not mesh.is_empty
        image = render_image(swapped, camera, "vase", SETTINGS)
        assert np.isfinite(image.rgb).all()
