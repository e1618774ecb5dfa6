"""
Tests for Signed Distance Field Module.
"""

import math

import numpy as np
import pytest
import torch

import sys
sys.path.insert(0, 'src')

from sdf_param.exceptions import ConfigError, FormatError
from sdf_param.sdf_fields import (
    BoxParams,
    BoxSdf,
    GridSdf,
    MeanSdf,
    PolycubeParams,
    PolycubeSdf,
    SphereSdf,
    TorusSdf,
    eval_box_sdf,
    eval_polycube_exact,
    eval_polycube_ks,
    eval_sdf,
    field_from_descriptor,
    grad_sdf,
    load_grid,
    project_to_surface,
    save_grid,
    scale_field,
    translate,
)


def random_polycube(rng, k):
    """Random polycube with boxes around the origin."""
    boxes = tuple(
        BoxParams(tuple(rng.uniform(-0.5, 0.5, 3)), tuple(rng.uniform(0.1, 0.5, 3)))
        for _ in range(k)
    )
    return PolycubeParams(boxes, ks_lambda=100.0)


def smooth_points(pc, rng, n):
    """Points away from the kinks of every per-box max and abs term."""
    centers = np.array([b.center for b in pc.boxes])
    half = np.array([b.half_extents for b in pc.boxes])
    out = []
    while len(out) < n:
        p = rng.uniform(-1, 1, 3)
        d = p[None, :] - centers
        terms = np.abs(d) - half
        order = np.sort(terms, axis=1)
        top_axis = terms.argmax(axis=1)
        gap_ok = (order[:, -1] - order[:, -2] >= 1e-3).all()
        abs_ok = (np.abs(d[np.arange(len(d)), top_axis]) >= 1e-3).all()
        if gap_ok and abs_ok:
            out.append(p)
    return np.array(out)


class TestBoxParams:
    """Tests for BoxParams and PolycubeParams."""

    def test_rejects_non_positive_half_extents(self):
        """Test that a zero half-extent is rejected."""
        with pytest.raises(ValueError):
            BoxParams((0, 0, 0), (1, 0, 1))

    def test_polycube_needs_a_box(self):
        """Test that an empty polycube is rejected."""
        with pytest.raises(ValueError):
            PolycubeParams(())

    def test_polycube_rejects_bad_lambda(self):
        """Test that a non-positive KS sharpness is rejected."""
        box = BoxParams((0, 0, 0), (1, 1, 1))
        with pytest.raises(ValueError):
            PolycubeParams((box,), ks_lambda=0.0)

    def test_dict_round_trip(self):
        """Test to_dict / from_dict."""
        pc = PolycubeParams(
            (BoxParams((0.1, 0, 0), (0.5, 0.4, 0.3)), BoxParams((0, 0.2, 0), (0.2, 0.2, 0.2))),
            ks_lambda=50.0,
        )
        assert PolycubeParams.from_dict(pc.to_dict()) == pc

    def test_without_box(self):
        """Test removing a box from a polycube."""
        pc = PolycubeParams((BoxParams((0, 0, 0), (1, 1, 1)), BoxParams((1, 0, 0), (1, 1, 1))))
        smaller = pc.without_box(0)
        assert smaller.k == 1
        assert smaller.boxes[0].center == (1.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            smaller.without_box(0)

    def test_scaled_about_centroid(self):
        """Test uniform scaling about the centroid."""
        pc = PolycubeParams((BoxParams((0.2, 0, 0), (0.5, 0.5, 0.5)),))
        shrunk = pc.scaled(0.5)
        assert shrunk.boxes[0].center == pytest.approx((0.2, 0.0, 0.0))
        assert shrunk.boxes[0].half_extents == pytest.approx((0.25, 0.25, 0.25))


class TestBoxSdf:
    """Tests for the single-box SDF."""

    def test_center_value(self):
        """Test the value at the box center."""
        box = BoxParams((0, 0, 0), (1, 1, 1))
        assert eval_box_sdf(box, (0, 0, 0)) == pytest.approx(-1.0)

    def test_outside_face(self):
        """Test a point one unit outside the +x face."""
        box = BoxParams((0, 0, 0), (1, 1, 1))
        assert eval_box_sdf(box, (2, 0, 0)) == pytest.approx(1.0)

    def test_on_face(self):
        """Test a point on the +x face."""
        box = BoxParams((0.5, 0, 0), (0.5, 1, 1))
        assert eval_box_sdf(box, (1, 0, 0)) == pytest.approx(0.0)

    def test_face_gradient_is_outward_normal(self):
        """Test that the gradient on a face interior is the face normal."""
        field = BoxSdf(BoxParams((0, 0, 0), (0.5, 0.5, 0.5)))
        assert grad_sdf(field, (0.1, 0.5, -0.2)) == pytest.approx([0.0, 1.0, 0.0])
        assert grad_sdf(field, (0.0, 0.1, -0.5)) == pytest.approx([0.0, 0.0, -1.0])


class TestPolycube:
    """Tests for the exact and KS polycube unions."""

    def test_single_box_exact(self):
        """Test that k=1 reduces to the box SDF."""
        pc = PolycubeParams((BoxParams((0, 0, 0), (1, 1, 1)),))
        assert eval_polycube_exact(pc, (0, 0, 0)) == pytest.approx(-1.0)

    def test_identical_boxes_idempotent(self):
        """Test that duplicating a box does not change the exact union."""
        box = BoxParams((0.1, -0.2, 0.3), (0.4, 0.5, 0.6))
        one = PolycubeParams((box,))
        two = PolycubeParams((box, box))
        pts = np.random.default_rng(0).uniform(-1, 1, (50, 3))
        np.testing.assert_allclose(eval_polycube_exact(two, pts), eval_polycube_exact(one, pts))

    def test_two_boxes_exact(self):
        """Test the hard union of two abutting boxes against a brute-force min."""
        left = BoxParams((-1, 0, 0), (1, 1, 1))
        right = BoxParams((1, 0, 0), (1, 1, 1))
        pc = PolycubeParams((left, right))
        pts = np.array([[0.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [1.5, 0.2, 0.0]])
        expected = np.minimum(eval_box_sdf(left, pts), eval_box_sdf(right, pts))
        np.testing.assert_allclose(eval_polycube_exact(pc, pts), expected)
        # the shared face stays at 0 under the min-of-boxes form
        assert eval_polycube_exact(pc, (0, 0, 0)) == pytest.approx(0.0)
        assert eval_polycube_exact(pc, (-1, 0, 0)) == pytest.approx(-1.0)

    def test_single_box_ks_is_exact(self):
        """Test that the KS union of one box equals the box SDF."""
        box = BoxParams((0.2, 0.1, 0), (0.3, 0.4, 0.5))
        pc = PolycubeParams((box,))
        pts = np.random.default_rng(1).uniform(-1, 1, (100, 3))
        np.testing.assert_allclose(eval_polycube_ks(pc, pts), eval_box_sdf(box, pts), atol=1e-12)

    def test_identical_boxes_ks_offset(self):
        """Test that two identical boxes shift the KS value by log(2)/lambda."""
        box = BoxParams((0, 0, 0), (1, 1, 1))
        pc = PolycubeParams((box, box), ks_lambda=100.0)
        assert eval_polycube_ks(pc, (0, 0, 0)) == pytest.approx(-1.0 - math.log(2) / 100, abs=1e-12)

    @pytest.mark.parametrize("k", [1, 2, 3, 5])
    def test_ks_bound(self, k):
        """Test 0 <= exact - KS <= log(k)/lambda on random polycubes."""
        rng = np.random.default_rng(k)
        for _ in range(10):
            pc = random_polycube(rng, k)
            pts = rng.uniform(-1.5, 1.5, (1000, 3))
            gap = eval_polycube_exact(pc, pts) - eval_polycube_ks(pc, pts)
            assert gap.min() >= -1e-12
            assert gap.max() <= math.log(k) / pc.ks_lambda + 1e-12

    def test_ks_is_stable_for_far_points(self):
        """Test that very large lambda * phi does not overflow."""
        pc = PolycubeParams((BoxParams((0, 0, 0), (0.1, 0.1, 0.1)),) * 2, ks_lambda=1e4)
        value = eval_polycube_ks(pc, (50.0, 0.0, 0.0))
        assert np.isfinite(value)

    def test_ks_gradient_matches_finite_differences(self):
        """Test the autodiff KS gradient against central differences."""
        rng = np.random.default_rng(7)
        pc = random_polycube(rng, 3)
        field = PolycubeSdf.from_params(pc)
        pts = smooth_points(pc, rng, 300)
        auto = grad_sdf(field, pts)
        h = 1e-4
        fd = np.zeros_like(pts)
        for axis in range(3):
            e = np.zeros(3)
            e[axis] = h
            fd[:, axis] = (eval_sdf(field, pts + e) - eval_sdf(field, pts - e)) / (2 * h)
        err = np.linalg.norm(auto - fd, axis=1) / np.maximum(np.linalg.norm(fd, axis=1), 1.0)
        assert err.max() < 1e-4

    def test_gradient_reaches_box_parameters(self):
        """Test that the KS union is differentiable in the box parameters."""
        centers = torch.zeros(2, 3, dtype=torch.float64, requires_grad=True)
        half = torch.full((2, 3), 0.3, dtype=torch.float64, requires_grad=True)
        field = PolycubeSdf(centers, half)
        field.evaluate(torch.tensor([[0.5, 0.1, 0.0]], dtype=torch.float64)).sum().backward()
        assert centers.grad.abs().sum() > 0
        assert half.grad.abs().sum() > 0

    def test_params_round_trip(self):
        """Test PolycubeSdf <-> PolycubeParams."""
        pc = random_polycube(np.random.default_rng(3), 2)
        assert PolycubeSdf.from_params(pc).params() == pc


class TestAnalyticFields:
    """Tests for spheres, tori and transforms."""

    def test_sphere_value(self):
        """Test the sphere SDF one radius outside."""
        assert eval_sdf(SphereSdf((0, 0, 0), 0.5), (1, 0, 0)) == pytest.approx(0.5)

    def test_sphere_gradient(self):
        """Test the radial unit gradient."""
        assert grad_sdf(SphereSdf((0, 0, 0), 0.5), (1, 0, 0)) == pytest.approx([1.0, 0.0, 0.0])

    def test_sphere_eikonal(self):
        """Test |grad| = 1 everywhere for the analytic sphere."""
        pts = np.random.default_rng(2).uniform(-2, 2, (1000, 3))
        g = grad_sdf(SphereSdf((0.1, 0.2, -0.3), 0.7), pts)
        assert np.abs(np.linalg.norm(g, axis=1) - 1).max() < 1e-6

    def test_torus_gradient_matches_autodiff(self):
        """Test the closed-form torus gradient against autodiff."""
        field = TorusSdf(0.5, 0.2)
        pts = torch.tensor(np.random.default_rng(4).uniform(-1, 1, (100, 3)))
        closed = field.gradient(pts)
        auto = super(TorusSdf, field).gradient(pts)
        assert torch.allclose(closed, auto, atol=1e-8)

    def test_torus_on_ring(self):
        """Test a point on the outer equator of the torus."""
        assert eval_sdf(TorusSdf(0.5, 0.2), (0.7, 0, 0)) == pytest.approx(0.0, abs=1e-10)

    @pytest.mark.parametrize(
        "field",
        [
            SphereSdf((0.1, 0, 0), 0.4),
            BoxSdf(BoxParams((0, 0.1, 0), (0.3, 0.2, 0.4))),
            TorusSdf(0.5, 0.1, (0, 0, 0.1)),
        ],
    )
    def test_translation_equivariance(self, field):
        """Test eval(translate(f, t), p) = eval(f, p - t)."""
        t = np.array([0.2, -0.1, 0.3])
        pts = np.random.default_rng(5).uniform(-1, 1, (200, 3))
        np.testing.assert_allclose(
            eval_sdf(translate(field, t), pts), eval_sdf(field, pts - t), atol=1e-12
        )

    def test_scale_sphere(self):
        """Test that scaling a sphere keeps it a sphere."""
        scaled = scale_field(SphereSdf((0.1, 0, 0), 0.5), 0.5)
        assert isinstance(scaled, SphereSdf)
        assert scaled.radius == pytest.approx(0.25)

    def test_mean_field(self):
        """Test the pointwise mean of two fields."""
        a = SphereSdf((0, 0, 0), 0.5)
        b = SphereSdf((0, 0, 0), 0.3)
        assert eval_sdf(MeanSdf([a, b]), (1, 0, 0)) == pytest.approx(0.6)


class TestGridSdf:
    """Tests for sampled grid fields and the binary grid format."""

    @pytest.fixture
    def sphere_grid(self):
        """A 64^3 sampling of a radius-0.5 sphere."""
        return GridSdf.from_field(SphereSdf((0, 0, 0), 0.5), 64)

    def test_matches_analytic(self, sphere_grid):
        """Test grid interpolation against the analytic sphere."""
        cell = 2.0 / 63
        assert eval_sdf(sphere_grid, (1, 0, 0)) == pytest.approx(0.5, abs=2 * cell)
        pts = np.random.default_rng(0).uniform(-0.9, 0.9, (500, 3))
        diff = eval_sdf(sphere_grid, pts) - eval_sdf(SphereSdf((0, 0, 0), 0.5), pts)
        assert np.abs(diff).max() < 2 * cell

    def test_extrapolates_outside_bbox(self, sphere_grid):
        """Test clamp-and-extrapolate outside the sampled box."""
        assert eval_sdf(sphere_grid, (1.5, 0, 0)) == pytest.approx(1.0, abs=1e-3)

    def test_gradient_by_central_differences(self, sphere_grid):
        """Test that grid gradients approximate the radial direction."""
        g = grad_sdf(sphere_grid, (0.5, 0.0, 0.0))
        assert g == pytest.approx([1.0, 0.0, 0.0], abs=0.05)

    def test_file_round_trip(self, sphere_grid, tmp_path):
        """Test save_grid / load_grid."""
        path = save_grid(sphere_grid, tmp_path / "sphere.sdfgrid")
        loaded = load_grid(path)
        assert loaded.resolution == (64, 64, 64)
        assert torch.allclose(loaded.values, sphere_grid.values, atol=1e-6)
        assert loaded.descriptor() == {"type": "grid", "path": str(path)}

    def test_x_fastest_sample_order(self, tmp_path):
        """Test that samples are written with x varying fastest."""
        values = torch.arange(2 * 3 * 4, dtype=torch.float64).reshape(2, 3, 4)
        path = save_grid(GridSdf(values), tmp_path / "order.sdfgrid")
        samples = np.frombuffer(path.read_bytes(), dtype="<f4", offset=76)
        assert samples[0] == float(values[0, 0, 0])
        assert samples[1] == float(values[1, 0, 0])
        assert samples[2] == float(values[0, 1, 0])

    def test_rejects_non_finite_samples(self, sphere_grid, tmp_path):
        """Test that NaN samples are rejected at load."""
        path = save_grid(sphere_grid, tmp_path / "bad.sdfgrid")
        data = bytearray(path.read_bytes())
        data[76:80] = np.array([np.nan], dtype="<f4").tobytes()
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError):
            load_grid(path)

    def test_rejects_bad_magic(self, tmp_path):
        """Test that a foreign file is rejected."""
        path = tmp_path / "junk.sdfgrid"
        path.write_bytes(b"\x00" * 200)
        with pytest.raises(FormatError):
            load_grid(path)


class TestProjection:
    """Tests for Newton projection onto the zero level set."""

    def test_sphere_projection(self):
        """Test projecting onto a sphere from outside."""
        result = project_to_surface(SphereSdf((0, 0, 0), 0.5), (0.7, 0, 0), steps=8)
        assert result.converged
        assert result.point == pytest.approx([0.5, 0.0, 0.0], abs=1e-4)

    def test_fixed_point(self):
        """Test that a surface point stays put."""
        result = project_to_surface(SphereSdf((0, 0, 0), 0.5), (0, 0.5, 0), steps=8)
        assert result.converged
        assert result.iterations == 0
        assert result.point == pytest.approx([0.0, 0.5, 0.0])

    def test_box_foot_point(self):
        """Test projection onto a box face."""
        field = BoxSdf(BoxParams((0, 0, 0), (0.5, 0.5, 0.5)))
        result = project_to_surface(field, (0.6, 0.1, 0.2), steps=5)
        assert result.converged
        assert result.point == pytest.approx([0.5, 0.1, 0.2], abs=1e-4)

    def test_degenerate_gradient_flagged(self):
        """Test that a start at the sphere center is reported as not converged."""
        result = project_to_surface(SphereSdf((0, 0, 0), 0.3), (0, 0, 0), steps=8)
        assert not result.converged


class TestDescriptors:
    """Tests for building fields from YAML descriptors."""

    def test_sphere_descriptor(self):
        """Test sphere descriptor round trip."""
        field = SphereSdf((0.1, 0, 0), 0.4)
        rebuilt = field_from_descriptor(field.descriptor())
        assert eval_sdf(rebuilt, (1, 0, 0)) == pytest.approx(eval_sdf(field, (1, 0, 0)))

    def test_polycube_descriptor(self):
        """Test polycube descriptor round trip."""
        pc = random_polycube(np.random.default_rng(9), 3)
        field = PolycubeSdf.from_params(pc)
        rebuilt = field_from_descriptor(field.descriptor())
        assert isinstance(rebuilt, PolycubeSdf)
        assert rebuilt.params() == pc

    def test_translate_descriptor(self):
        """Test a nested translate descriptor."""
        desc = {"type": "translate", "offset": [0.1, 0, 0], "field": {"type": "sphere", "radius": 0.5}}
        assert eval_sdf(field_from_descriptor(desc), (0.6, 0, 0)) == pytest.approx(0.0)

    def test_unknown_type(self):
        """Test that unknown field types are a config error."""
        with pytest.raises(ConfigError):
            field_from_descriptor({"type": "klein_bottle"})

    def test_missing_key(self):
        """Test that missing descriptor keys are a config error."""
        with pytest.raises(ConfigError):
            field_from_descriptor({"type": "sphere"})
