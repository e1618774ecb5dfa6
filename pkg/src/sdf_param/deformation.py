"""
Deformation Module.

Forward and inverse deformation networks between a surface and its
parametric domain, the composed surface SDF ``s(p) = F(p + D(p, z))``, and
the parameterization losses (smoothness, weighted cycle, tangential
Laplacian, Eikonal).
"""

import copy
import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import torch
from torch import nn

from .nn import (
    DTYPE,
    LatentCodes,
    Mlp,
    MlpConfig,
    PosEncConfig,
    expand_code,
    pos_encode,
    safe_norm,
)
from .sdf_fields import SdfField, project_points
from .utils import format_fields, make_generator

logger = logging.getLogger(__name__)

CodeLike = Union[str, torch.Tensor, None]

# neighbor disks are only built around points this close to the zero level set
SURFACE_TOL = 0.05


@dataclass
class DeformConfig:
    """Network shape for both deformation fields."""

    depth: int = 4
    width: int = 64
    pos_frequencies: int = 6
    code_dim: int = 16
    softplus_beta: float = 100.0

    def to_dict(self) -> Dict:
        return asdict(self)


class DeformModel(nn.Module):
    """
    Bi-directional deformation between surface and domain.

    Both networks take ``pe(p) ⊕ z_s`` and output a displacement; their last
    layers start at zero so both maps begin as the identity. The domain field
    is frozen and is not a parameter of the module.
    """

    def __init__(
        self,
        domain: SdfField,
        object_ids: Sequence[str],
        config: Optional[DeformConfig] = None,
        seed: int = 0,
    ):
        super().__init__()
        self.config = config or DeformConfig()
        self.pos_enc = PosEncConfig(self.config.pos_frequencies, include_input=True)
        in_dim = self.pos_enc.output_dim() + self.config.code_dim
        mlp_cfg = MlpConfig(
            depth=self.config.depth,
            width=self.config.width,
            input_dim=in_dim,
            output_dim=3,
            activation="softplus",
            softplus_beta=self.config.softplus_beta,
            zero_init_last=True,
        )
        self.f_def = Mlp(mlp_cfg, seed=seed)
        self.f_inv_def = Mlp(mlp_cfg, seed=seed + 1)
        self.shape_codes = LatentCodes(object_ids, self.config.code_dim, seed=seed + 2)
        self.domain = domain

    @property
    def object_ids(self):
        return self.shape_codes.object_ids

    def code(self, z: CodeLike) -> Optional[torch.Tensor]:
        """Resolve an object id (or pass a code tensor through)."""
        if isinstance(z, str):
            return self.shape_codes[z]
        return z

    def _features(self, points: torch.Tensor, code: Optional[torch.Tensor]) -> torch.Tensor:
        enc = pos_encode(points, self.pos_enc)
        z = expand_code(code, points.shape[0])
        if z is None:
            z = points.new_zeros(points.shape[0], self.config.code_dim)
        return torch.cat([enc, z], dim=-1)

    def forward_displacement(self, points: torch.Tensor, code: Optional[torch.Tensor]):
        return self.f_def(self._features(points, code))

    def inverse_displacement(self, points: torch.Tensor, code: Optional[torch.Tensor]):
        return self.f_inv_def(self._features(points, code))

    def forward_map(self, points: torch.Tensor, z: CodeLike) -> torch.Tensor:
        """p' = p + F_def(p, z)."""
        return points + self.forward_displacement(points, self.code(z))

    def inverse_map(self, points: torch.Tensor, z: CodeLike) -> torch.Tensor:
        """p'' = p' + F_inv_def(p', z)."""
        return points + self.inverse_displacement(points, self.code(z))

    def composed_sdf(self, points: torch.Tensor, z: CodeLike) -> torch.Tensor:
        return self.domain.evaluate(self.forward_map(points, z))

    def composed_field(self, z: CodeLike) -> "ComposedSdf":
        return ComposedSdf(self, z)

    def with_domain(self, domain: SdfField) -> "DeformModel":
        """Shallow twin sharing every network and code but evaluating ``domain``."""
        twin = copy.copy(self)
        twin.domain = domain
        return twin


class ComposedSdf(SdfField):
    """The surface SDF of one object seen through the forward deformation."""

    kind = "composed"

    def __init__(self, model: DeformModel, z: CodeLike):
        self.model = model
        self.z = z

    def evaluate(self, points: torch.Tensor) -> torch.Tensor:
        return self.model.composed_sdf(points, self.z)


def forward_map(m: DeformModel, p: torch.Tensor, z_s: CodeLike) -> torch.Tensor:
    return m.forward_map(p, z_s)


def inverse_map(m: DeformModel, p_prime: torch.Tensor, z_s: CodeLike) -> torch.Tensor:
    return m.inverse_map(p_prime, z_s)


def composed_sdf(m: DeformModel, p: torch.Tensor, z_s: CodeLike) -> torch.Tensor:
    return m.composed_sdf(p, z_s)


@dataclass
class SurfaceSamples:
    """A batch of surface samples of one object."""

    points: torch.Tensor
    weights: torch.Tensor
    normals: torch.Tensor
    object_id: str

    def __post_init__(self):
        n = self.points.shape[0]
        if self.weights.shape != (n,) or self.normals.shape != (n, 3):
            raise ValueError("weights and normals must match the number of points")

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def subset(self, mask: torch.Tensor) -> "SurfaceSamples":
        return SurfaceSamples(
            self.points[mask], self.weights[mask], self.normals[mask], self.object_id
        )


def loss_smooth(m: DeformModel, samples: SurfaceSamples) -> torch.Tensor:
    """Mean of |F_def(p)| + |F_inv_def(p')| over the batch."""
    if len(samples) == 0:
        raise ValueError("loss_smooth needs a non-empty batch")
    code = m.code(samples.object_id)
    d_fwd = m.forward_displacement(samples.points, code)
    d_inv = m.inverse_displacement(samples.points + d_fwd, code)
    return (safe_norm(d_fwd) + safe_norm(d_inv)).mean()


def loss_cycle(m: DeformModel, samples: SurfaceSamples) -> torch.Tensor:
    """Batch mean of lambda(p) * |p - p''| with p'' = inverse_map(forward_map(p))."""
    if len(samples) == 0:
        raise ValueError("loss_cycle needs a non-empty batch")
    p_prime = m.forward_map(samples.points, samples.object_id)
    p_back = m.inverse_map(p_prime, samples.object_id)
    return (samples.weights * safe_norm(samples.points - p_back)).mean()


def cycle_errors(m: DeformModel, points: torch.Tensor, z: CodeLike) -> torch.Tensor:
    """Unweighted round-trip distances |p - inverse_map(forward_map(p))|."""
    with torch.no_grad():
        return torch.linalg.norm(points - m.inverse_map(m.forward_map(points, z), z), dim=-1)


def orthonormal_basis(n: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Branchless tangent frame (b1, b2) for unit normals n of shape (N, 3)."""
    one = torch.ones_like(n[:, 2])
    sign = torch.where(n[:, 2] >= 0, one, -one)
    a = -1.0 / (sign + n[:, 2])
    b = n[:, 0] * n[:, 1] * a
    b1 = torch.stack([1.0 + sign * n[:, 0] ** 2 * a, sign * b, -sign * n[:, 0]], dim=-1)
    b2 = torch.stack([b, sign + n[:, 1] ** 2 * a, -n[:, 1]], dim=-1)
    return b1, b2


@dataclass
class NeighborSet:
    """Projected neighbors per sample and which of them survived projection."""

    points: torch.Tensor  # (B, m, 3)
    valid: torch.Tensor  # (B, m)

    @property
    def included(self) -> torch.Tensor:
        """Samples with at least three surviving neighbors."""
        return self.valid.sum(dim=-1) >= 3


def sample_neighbors_batch(
    field: SdfField,
    points: torch.Tensor,
    m_count: int = 6,
    rho: float = 0.02,
    seed: int = 0,
    first_index: int = 0,
    steps: int = 5,
    surface_tol: float = SURFACE_TOL,
) -> NeighborSet:
    """
    Ring neighbors on the zero level set of ``field`` around each point.

    Points with ``|field(p)| >= surface_tol`` get no neighbors (every entry
    invalid), so callers leave them out of the Laplacian.

    Directions are spread evenly in the tangent plane with a rotational offset
    drawn from a generator seeded by ``(seed, sample index)``; each offset
    point at distance ``rho`` is projected back with at most ``steps`` Newton
    steps and dropped if projection fails.
    """
    b = points.shape[0]
    p = points.detach()
    with torch.no_grad():
        on_surface = field.evaluate(p).abs() < surface_tol
    if not bool(on_surface.all()):
        logger.debug(
            format_fields(event="neighbors_off_surface", dropped=int((~on_surface).sum()), batch=b)
        )
    g = field.gradient(p)
    n = g / torch.linalg.norm(g, dim=-1, keepdim=True).clamp_min(1e-12)
    b1, b2 = orthonormal_basis(n)
    offsets = torch.empty(b, dtype=DTYPE)
    for i in range(b):
        gen = make_generator(seed * 1_000_003 + first_index + i)
        offsets[i] = torch.rand(1, generator=gen, dtype=DTYPE)[0] * 2 * math.pi
    angles = offsets[:, None] + 2 * math.pi * torch.arange(m_count, dtype=DTYPE)[None] / m_count
    ring = torch.cos(angles)[..., None] * b1[:, None] + torch.sin(angles)[..., None] * b2[:, None]
    start = (p[:, None, :] + rho * ring).reshape(-1, 3)
    projected, converged, _ = project_points(field, start, steps)
    valid = converged.reshape(b, m_count) & on_surface[:, None]
    return NeighborSet(projected.reshape(b, m_count, 3), valid)


def sample_neighbors(
    field: SdfField,
    point: torch.Tensor,
    m_count: int = 6,
    rho: float = 0.02,
    seed: int = 0,
    index: int = 0,
) -> Optional[torch.Tensor]:
    """
    Surviving neighbors of one surface point, or ``None`` if fewer than three
    survive or the point is not within ``SURFACE_TOL`` of the surface.
    """
    ns = sample_neighbors_batch(field, point.reshape(1, 3), m_count, rho, seed, index)
    if not bool(ns.included[0]):
        return None
    return ns.points[0][ns.valid[0]]


def laplacian_vector(
    p: torch.Tensor,
    q: torch.Tensor,
    p_mapped: torch.Tensor,
    q_mapped: torch.Tensor,
    valid: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """
    Weighted umbrella vector sum_j w_j (p' - q'_j).

    ``w_j = exp(-|p - q_j| / l)`` with ``l`` the mean neighbor distance,
    normalized to sum to one. Shapes: p (B, 3), q (B, m, 3); a single sample
    may be passed as p (3,), q (m, 3).
    """
    single = p.dim() == 1
    if single:
        p, q, p_mapped, q_mapped = p[None], q[None], p_mapped[None], q_mapped[None]
    if valid is None:
        valid = torch.ones(q.shape[:2], dtype=torch.bool)
    mask = valid.to(p.dtype)
    dist = torch.linalg.norm(p[:, None, :] - q, dim=-1)
    count = mask.sum(dim=-1).clamp_min(1.0)
    mean_dist = ((dist * mask).sum(dim=-1) / count).clamp_min(1e-12)
    w = torch.exp(-dist / mean_dist[:, None]) * mask
    w = w / w.sum(dim=-1, keepdim=True).clamp_min(1e-300)
    delta = (w[..., None] * (p_mapped[:, None, :] - q_mapped)).sum(dim=1)
    return delta[0] if single else delta


def tangential_part(delta: torch.Tensor, normal: torch.Tensor) -> torch.Tensor:
    """delta - <delta, n> n for unit normals n."""
    return delta - (delta * normal).sum(dim=-1, keepdim=True) * normal


def loss_laplace(
    m: DeformModel,
    samples: SurfaceSamples,
    neighbors: Optional[NeighborSet] = None,
    rho: float = 0.02,
    m_count: int = 6,
    seed: int = 0,
) -> torch.Tensor:
    """
    Mean norm of the tangential part of the mapped Laplacian.

    The normal is the normalized domain gradient at p'. Samples with fewer
    than three projected neighbors are left out; an empty batch gives 0.
    """
    code = m.code(samples.object_id)
    if neighbors is None:
        neighbors = sample_neighbors_batch(
            m.composed_field(code), samples.points, m_count, rho, seed
        )
    keep = neighbors.included
    if not bool(keep.any()):
        return torch.zeros((), dtype=DTYPE)
    p = samples.points[keep]
    q = neighbors.points[keep]
    valid = neighbors.valid[keep]
    b, k = q.shape[:2]
    p_mapped = m.forward_map(p, code)
    q_mapped = m.forward_map(q.reshape(-1, 3), code).reshape(b, k, 3)
    delta = laplacian_vector(p, q, p_mapped, q_mapped, valid)
    g = m.domain.gradient(p_mapped, create_graph=True)
    normal = g / safe_norm(g)[:, None].clamp_min(1e-12)
    return safe_norm(tangential_part(delta, normal)).mean()


def loss_eikonal(m: DeformModel, points: torch.Tensor, z: CodeLike) -> torch.Tensor:
    """Mean (|grad s(p)| - 1)^2 of the composed SDF."""
    x = points.detach().clone().requires_grad_(True)
    g = m.composed_field(z).gradient(x, create_graph=True)
    return ((safe_norm(g) - 1.0) ** 2).mean()


def loss_code(
    shape_codes: Sequence[torch.Tensor], appearance_codes: Sequence[torch.Tensor] = ()
) -> torch.Tensor:
    """|z_s| + |z_a| per object, averaged over objects."""
    count = max(len(shape_codes), len(appearance_codes))
    if count == 0:
        return torch.zeros((), dtype=DTYPE)
    norms = [safe_norm(c, dim=-1) for c in list(shape_codes) + list(appearance_codes)]
    return torch.stack(norms).sum() / count


def surface_samples_from_field(
    field: SdfField,
    n: int,
    seed: int,
    object_id: str,
    steps: int = 8,
    oversample: int = 4,
) -> SurfaceSamples:
    """
    Up to ``n`` points on the zero level set of ``field`` with unit normals.

    Uniform points in [-1, 1]^3 are Newton-projected; only converged points
    that stay inside the cube are kept.
    """
    gen = make_generator(seed)
    start = torch.rand(n * oversample, 3, generator=gen, dtype=DTYPE) * 2 - 1
    with torch.no_grad():
        near = start[field.evaluate(start).abs() < 0.5]
    q, ok, _ = project_points(field, near, steps)
    q = q[ok & (q.abs() <= 1.0).all(dim=-1)][:n]
    g = field.gradient(q)
    normals = g / torch.linalg.norm(g, dim=-1, keepdim=True).clamp_min(1e-12)
    return SurfaceSamples(q, torch.ones(q.shape[0], dtype=DTYPE), normals, object_id)
