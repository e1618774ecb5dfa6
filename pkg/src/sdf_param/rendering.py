"""
Rendering Module.

SDF-based volume rendering: cameras and rays, stratified ray sampling, the
Laplace-CDF density, transparency and color weights, and the appearance
networks whose radiance is ``material(p', n, z_a) * exp(shading(p', n, v, z_a))``.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import TYPE_CHECKING, Any, Dict, Optional, Sequence, Tuple

import numpy as np
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
    spatial_gradient,
)
from .sdf_fields import SdfField
from .utils import make_generator

if TYPE_CHECKING:
    from .deformation import DeformModel

logger = logging.getLogger(__name__)

PSNR_SENTINEL = 99.0


@dataclass
class Camera:
    """
    Pinhole camera.

    ``rotation`` is world-from-camera; the camera looks down its local -z
    axis with +y up. ``cx``/``cy`` are the principal point in pixels.
    """

    position: np.ndarray
    rotation: np.ndarray
    focal: float
    width: int
    height: int
    cx: Optional[float] = None
    cy: Optional[float] = None

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        if self.focal <= 0:
            raise ValueError("Camera focal length must be > 0")
        if self.width < 1 or self.height < 1:
            raise ValueError("Camera image size must be positive")
        if not np.allclose(self.rotation.T @ self.rotation, np.eye(3), atol=1e-6):
            raise ValueError("Camera rotation must be orthonormal")
        if np.linalg.det(self.rotation) < 0:
            raise ValueError("Camera rotation must have determinant +1")
        if self.cx is None:
            self.cx = self.width / 2.0
        if self.cy is None:
            self.cy = self.height / 2.0

    @classmethod
    def look_at(
        cls,
        eye: Sequence[float],
        target: Sequence[float] = (0.0, 0.0, 0.0),
        up: Sequence[float] = (0.0, 1.0, 0.0),
        focal: float = 80.0,
        width: int = 64,
        height: int = 64,
    ) -> "Camera":
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        up = np.asarray(up, dtype=np.float64)
        if abs(float(np.dot(forward, up))) > 0.999 * np.linalg.norm(up):
            up = np.array([0.0, 0.0, 1.0]) if abs(forward[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        right = np.cross(forward, up)
        right /= np.linalg.norm(right)
        true_up = np.cross(right, forward)
        rotation = np.stack([right, true_up, -forward], axis=1)
        return cls(eye, rotation, focal, width, height)

    def world_from_camera(self) -> np.ndarray:
        matrix = np.eye(4)
        matrix[:3, :3] = self.rotation
        matrix[:3, 3] = self.position
        return matrix

    @classmethod
    def from_matrix(
        cls, matrix: Sequence[Sequence[float]], focal: float, width: int, height: int,
        cx: Optional[float] = None, cy: Optional[float] = None,
    ) -> "Camera":
        m = np.asarray(matrix, dtype=np.float64)
        return cls(m[:3, 3], m[:3, :3], focal, width, height, cx, cy)

    def resized(self, width: int, height: int) -> "Camera":
        """Same view at another resolution."""
        sx, sy = width / self.width, height / self.height
        return Camera(
            self.position, self.rotation, self.focal * sx, width, height,
            self.cx * sx, self.cy * sy,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "world_from_camera": self.world_from_camera().tolist(),
            "focal": float(self.focal),
            "principal": [float(self.cx), float(self.cy)],
            "width": int(self.width),
            "height": int(self.height),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Camera":
        cx, cy = data.get("principal", (None, None))
        return cls.from_matrix(
            data["world_from_camera"], data["focal"], data["width"], data["height"], cx, cy
        )


def camera_rays(camera: Camera) -> Tuple[torch.Tensor, torch.Tensor]:
    """Per-pixel ray origins and unit directions, row-major, shape (H*W, 3)."""
    j, i = np.meshgrid(np.arange(camera.width), np.arange(camera.height), indexing="xy")
    local = np.stack(
        [
            (j + 0.5 - camera.cx) / camera.focal,
            -(i + 0.5 - camera.cy) / camera.focal,
            -np.ones_like(j, dtype=np.float64),
        ],
        axis=-1,
    ).reshape(-1, 3)
    dirs = local @ camera.rotation.T
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    origins = np.broadcast_to(camera.position, dirs.shape)
    return torch.tensor(origins, dtype=DTYPE), torch.tensor(dirs, dtype=DTYPE)


@dataclass
class Ray:
    origin: Sequence[float]
    direction: Sequence[float]
    near: float
    far: float

    def __post_init__(self):
        if abs(float(np.linalg.norm(self.direction)) - 1.0) > 1e-6:
            raise ValueError("Ray direction must be a unit vector")
        if not 0 <= self.near < self.far:
            raise ValueError("Ray bounds must satisfy 0 <= near < far")


@dataclass
class DensityConfig:
    """Laplace-CDF density parameters; ``alpha`` defaults to ``1 / beta``."""

    beta: float = 0.02
    alpha: Optional[float] = None

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if self.alpha is None:
            self.alpha = 1.0 / self.beta
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")


def density_from_sdf(s: torch.Tensor, cfg: DensityConfig) -> torch.Tensor:
    """sigma(s) = alpha * Psi_beta(-s) with Psi_beta the zero-mean Laplace CDF."""
    s = torch.as_tensor(s, dtype=DTYPE)
    tail = 0.5 * torch.exp(-s.abs() / cfg.beta)
    psi = torch.where(s >= 0, tail, 1.0 - tail)
    return cfg.alpha * psi


def sample_depths(
    near: torch.Tensor,
    far: torch.Tensor,
    n_samples: int,
    stratified: bool = False,
    generator: Optional[torch.Generator] = None,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Depths and interval lengths for a batch of rays.

    Bins are equal slices of [near, far]; samples sit at bin midpoints or, when
    ``stratified``, uniformly inside each bin. ``delta_i = t_{i+1} - t_i`` and
    the last interval takes the remaining span so that sum(delta) = far - near.

    Returns:
        (t, delta), both of shape (R, n_samples).
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    near = near.reshape(-1, 1)
    far = far.reshape(-1, 1)
    span = far - near
    offsets = torch.arange(n_samples, dtype=DTYPE)[None]
    if stratified:
        u = torch.rand(near.shape[0], n_samples, generator=generator, dtype=DTYPE)
    else:
        u = torch.full((near.shape[0], n_samples), 0.5, dtype=DTYPE)
    t = near + span * (offsets + u) / n_samples
    delta = torch.cat([t[:, 1:] - t[:, :-1], (far - t[:, -1:]) + (t[:, :1] - near)], dim=-1)
    return t, delta


def sample_ray(
    ray: Ray, n_samples: int, stratified: bool = False, seed: int = 0
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Sample one ray; returns (positions (n, 3), t (n,), delta (n,))."""
    gen = make_generator(seed) if stratified else None
    t, delta = sample_depths(
        torch.tensor([ray.near], dtype=DTYPE),
        torch.tensor([ray.far], dtype=DTYPE),
        n_samples,
        stratified,
        gen,
    )
    origin = torch.tensor(ray.origin, dtype=DTYPE)
    direction = torch.tensor(ray.direction, dtype=DTYPE)
    positions = origin + t[0][:, None] * direction
    return positions, t[0], delta[0]


def compute_weights(sigma: torch.Tensor, delta: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Transparency and color weights along the last axis.

    ``T_1 = 1``, ``T_{i+1} = T_i exp(-sigma_i delta_i)`` and
    ``lambda_i = T_i (1 - exp(-sigma_i delta_i))``.
    """
    tau = sigma * delta
    accumulated = torch.cumsum(tau, dim=-1)
    transparency = torch.exp(-torch.cat([torch.zeros_like(tau[..., :1]), accumulated[..., :-1]], -1))
    weights = transparency * (1.0 - torch.exp(-tau))
    return transparency, weights


@dataclass
class RaySampleSet:
    """Per-sample quantities for a batch of rays, each of shape (R, n) or (R, n, 3)."""

    positions: torch.Tensor
    deltas: torch.Tensor
    sdf: torch.Tensor
    sigma: torch.Tensor
    transparency: torch.Tensor
    weights: torch.Tensor

    @property
    def opacity(self) -> torch.Tensor:
        return self.weights.sum(dim=-1)


def integrate_ray(
    weights: torch.Tensor,
    radiances: torch.Tensor,
    background: Sequence[float] = (0.0, 0.0, 0.0),
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Composite radiances along rays.

    Returns:
        (rgb, opacity) where ``rgb = sum_i lambda_i r_i + (1 - sum_i lambda_i) * background``.
    """
    opacity = weights.sum(dim=-1)
    bg = torch.as_tensor(background, dtype=DTYPE)
    rgb = (weights[..., None] * radiances).sum(dim=-2) + (1.0 - opacity)[..., None] * bg
    return rgb, opacity


def ray_sphere_bounds(
    origins: torch.Tensor, dirs: torch.Tensor, radius: float
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Entry/exit depths against a centered bounding sphere and the hit mask."""
    b = (origins * dirs).sum(dim=-1)
    c = (origins * origins).sum(dim=-1) - radius * radius
    disc = b * b - c
    hit = disc > 0
    root = torch.sqrt(disc.clamp_min(0.0))
    near = (-b - root).clamp_min(0.0)
    far = -b + root
    hit = hit & (far > near)
    far = torch.where(hit, far, near + 1.0)
    return near, far, hit


@dataclass
class RenderSettings:
    """How rays are marched and composited."""

    n_samples: int = 64
    stratified: bool = False
    bound_radius: float = 1.2
    background: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    density: DensityConfig = field(default_factory=DensityConfig)
    chunk_rays: int = 1024

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class AppearanceConfig:
    depth: int = 3
    width: int = 64
    pos_frequencies: int = 6
    view_frequencies: int = 4
    code_dim: int = 16

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class AppearanceModel(nn.Module):
    """
    Material and shading networks with per-object appearance codes.

    The material network never sees the view direction; the shading network
    outputs one scalar (grayscale log-shading) and starts at zero.
    """

    def __init__(
        self, object_ids: Sequence[str], config: Optional[AppearanceConfig] = None, seed: int = 0
    ):
        super().__init__()
        self.config = config or AppearanceConfig()
        cfg = self.config
        self.pos_enc = PosEncConfig(cfg.pos_frequencies, include_input=True)
        self.view_enc = PosEncConfig(cfg.view_frequencies, include_input=True)
        mat_in = self.pos_enc.output_dim() + 3 + cfg.code_dim
        shd_in = mat_in + self.view_enc.output_dim()
        self.f_mat = Mlp(
            MlpConfig(cfg.depth, cfg.width, mat_in, 3, "relu", output_transform="sigmoid"),
            seed=seed,
        )
        self.f_shd = Mlp(
            MlpConfig(cfg.depth, cfg.width, shd_in, 1, "relu", zero_init_last=True),
            seed=seed + 1,
        )
        self.appearance_codes = LatentCodes(object_ids, cfg.code_dim, seed=seed + 2)

    def code(self, z):
        if isinstance(z, str):
            return self.appearance_codes[z]
        return z

    def _base(self, p_prime: torch.Tensor, normals: torch.Tensor, code) -> torch.Tensor:
        z = expand_code(self.code(code), p_prime.shape[0])
        if z is None:
            z = p_prime.new_zeros(p_prime.shape[0], self.config.code_dim)
        return torch.cat([pos_encode(p_prime, self.pos_enc), normals, z], dim=-1)

    def material(self, p_prime: torch.Tensor, normals: torch.Tensor, z_a) -> torch.Tensor:
        return self.f_mat(self._base(p_prime, normals, z_a))

    def shading(
        self, p_prime: torch.Tensor, normals: torch.Tensor, views: torch.Tensor, z_a
    ) -> torch.Tensor:
        features = torch.cat(
            [self._base(p_prime, normals, z_a), pos_encode(views, self.view_enc)], dim=-1
        )
        return self.f_shd(features)[:, 0]


def radiance(
    app: AppearanceModel,
    p_prime: torch.Tensor,
    n: torch.Tensor,
    v: torch.Tensor,
    z_a,
) -> torch.Tensor:
    """material * exp(shading), broadcast over RGB."""
    return app.material(p_prime, n, z_a) * torch.exp(app.shading(p_prime, n, v, z_a))[:, None]


def loss_shading(shading: torch.Tensor) -> torch.Tensor:
    """Mean absolute log-shading over a batch of shading outputs."""
    if shading.numel() == 0:
        return torch.zeros((), dtype=DTYPE)
    return shading.abs().mean()


def loss_rgb(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Mean componentwise absolute difference."""
    if pred.shape != gt.shape:
        raise ValueError(f"Prediction shape {tuple(pred.shape)} != target {tuple(gt.shape)}")
    return (pred - gt).abs().mean()


def psnr(a, b) -> float:
    """10 log10(1 / MSE) for images in [0, 1]; identical images give the 99 dB sentinel."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("Images must have the same shape")
    mse = float(np.mean((a - b) ** 2))
    if mse <= 0.0:
        return PSNR_SENTINEL
    return min(PSNR_SENTINEL, 10.0 * math.log10(1.0 / mse))


def march_field(
    field: SdfField,
    origins: torch.Tensor,
    dirs: torch.Tensor,
    settings: RenderSettings,
    generator: Optional[torch.Generator] = None,
) -> RaySampleSet:
    """Sample rays through an SDF and compute densities and weights (no appearance)."""
    near, far, hit = ray_sphere_bounds(origins, dirs, settings.bound_radius)
    t, delta = sample_depths(near, far, settings.n_samples, settings.stratified, generator)
    positions = origins[:, None, :] + t[..., None] * dirs[:, None, :]
    sdf = field.evaluate(positions.reshape(-1, 3)).reshape(t.shape)
    sigma = density_from_sdf(sdf, settings.density) * hit[:, None].to(DTYPE)
    transparency, weights = compute_weights(sigma, delta)
    return RaySampleSet(positions, delta, sdf, sigma, transparency, weights)


@dataclass
class RenderOutput:
    """Per-ray results of rendering a bundle."""

    rgb: torch.Tensor
    opacity: torch.Tensor
    material: torch.Tensor
    shading: torch.Tensor
    samples: RaySampleSet
    sample_shading: torch.Tensor
    normals: torch.Tensor


def render_rays(
    deform: "DeformModel",
    app: AppearanceModel,
    object_id: str,
    origins: torch.Tensor,
    dirs: torch.Tensor,
    settings: RenderSettings,
    generator: Optional[torch.Generator] = None,
    texture_override=None,
    shading_from: Optional[str] = None,
    zero_shading: bool = False,
    create_graph: bool = False,
) -> RenderOutput:
    """
    Render rays through the composed SDF of ``object_id``.

    Normals are the normalized composed-SDF gradients at the samples. With a
    ``texture_override`` the material comes from ``texture_override.lookup(p')``
    instead of the material network. ``shading_from`` feeds another object's
    appearance code into the shading network only.
    """
    near, far, hit = ray_sphere_bounds(origins, dirs, settings.bound_radius)
    t, delta = sample_depths(near, far, settings.n_samples, settings.stratified, generator)
    positions = origins[:, None, :] + t[..., None] * dirs[:, None, :]
    flat = positions.reshape(-1, 3)
    z_s = deform.code(object_id)
    with torch.enable_grad():
        x = flat.detach().clone().requires_grad_(True)
        p_prime = deform.forward_map(x, z_s)
        sdf = deform.domain.evaluate(p_prime)
        grad = spatial_gradient(sdf, x, create_graph=create_graph)
    if not create_graph:
        p_prime, sdf, grad = p_prime.detach(), sdf.detach(), grad.detach()
    normals = grad / torch.linalg.norm(grad, dim=-1, keepdim=True).clamp_min(1e-12)
    views = dirs[:, None, :].expand_as(positions).reshape(-1, 3)

    if texture_override is not None:
        material = texture_override.lookup(p_prime)
    else:
        material = app.material(p_prime, normals, object_id)
    if zero_shading:
        shading = torch.zeros(flat.shape[0], dtype=DTYPE)
    else:
        shading = app.shading(p_prime, normals, views, shading_from or object_id)

    sdf = sdf.reshape(t.shape)
    sigma = density_from_sdf(sdf, settings.density) * hit[:, None].to(DTYPE)
    transparency, weights = compute_weights(sigma, delta)
    mat = material.reshape(*t.shape, 3)
    shd = shading.reshape(t.shape)
    rgb, opacity = integrate_ray(weights, mat * torch.exp(shd)[..., None], settings.background)
    samples = RaySampleSet(positions, delta, sdf, sigma, transparency, weights)
    return RenderOutput(
        rgb=rgb,
        opacity=opacity,
        material=(weights[..., None] * mat).sum(dim=-2),
        shading=(weights * shd).sum(dim=-1),
        samples=samples,
        sample_shading=shd,
        normals=normals.reshape(*t.shape, 3),
    )


@dataclass
class RenderedImage:
    """Image-shaped render buffers as numpy arrays."""

    rgb: np.ndarray
    opacity: np.ndarray
    material: np.ndarray
    shading: np.ndarray


def render_image(
    bundle,
    camera: Camera,
    object_id: str,
    settings: Optional[RenderSettings] = None,
    resolution: Optional[int] = None,
    texture_override=None,
    shading_from: Optional[str] = None,
    zero_shading: bool = False,
) -> RenderedImage:
    """
    Render a full frame of ``object_id`` from ``bundle`` (anything with
    ``deform`` and ``appearance`` attributes). Deterministic midpoint sampling
    is always used for full frames.
    """
    settings = settings or RenderSettings()
    frame = replace(settings, stratified=False)
    if resolution is not None:
        camera = camera.resized(resolution, resolution)
    if texture_override is not None and hasattr(texture_override, "check_domain"):
        texture_override.check_domain(bundle.deform.domain)
    origins, dirs = camera_rays(camera)
    outputs = []
    with torch.no_grad():
        for start in range(0, origins.shape[0], frame.chunk_rays):
            stop = start + frame.chunk_rays
            outputs.append(
                render_rays(
                    bundle.deform,
                    bundle.appearance,
                    object_id,
                    origins[start:stop],
                    dirs[start:stop],
                    frame,
                    texture_override=texture_override,
                    shading_from=shading_from,
                    zero_shading=zero_shading,
                )
            )
    h, w = camera.height, camera.width
    return RenderedImage(
        rgb=torch.cat([o.rgb for o in outputs]).reshape(h, w, 3).numpy(),
        opacity=torch.cat([o.opacity for o in outputs]).reshape(h, w).numpy(),
        material=torch.cat([o.material for o in outputs]).reshape(h, w, 3).numpy(),
        shading=torch.cat([o.shading for o in outputs]).reshape(h, w).numpy(),
    )


def foreground_chroma(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Mean per-pixel RGB / luminance over the foreground mask."""
    rgb = image[mask]
    if rgb.size == 0:
        return np.zeros(3)
    luminance = rgb @ np.array([0.2126, 0.7152, 0.0722])
    return (rgb / np.maximum(luminance, 1e-6)[:, None]).mean(axis=0)
