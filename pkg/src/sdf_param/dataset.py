"""
Synthetic Dataset Module.

Sphere-traced ground-truth renders of an SDF with Lambertian + ambient
shading, written as a multi-view dataset directory::

    images/view_0000.png ...   8-bit RGB
    cameras.txt                YAML list of world-from-camera matrices + intrinsics
    meta.txt                   YAML: seed, lights, albedo, shape descriptor
    checksums.sha256
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import imageio.v2 as imageio
import numpy as np
import torch

from .exceptions import ConfigError, FormatError
from .nn import DTYPE
from .rendering import Camera, camera_rays, ray_sphere_bounds
from .sdf_fields import SdfField, field_from_descriptor
from .utils import format_fields, read_yaml, verify_checksums, write_checksums, write_yaml

logger = logging.getLogger(__name__)

CAMERAS_FILE = "cameras.txt"
META_FILE = "meta.txt"
IMAGES_DIR = "images"
TRACE_STEPS = 128
TRACE_TOL = 1e-4

Albedo = Callable[[np.ndarray], np.ndarray]


@dataclass
class Light:
    """Directional light; ``direction`` points from the surface toward the light."""

    direction: Tuple[float, float, float]
    intensity: float = 1.0

    def unit(self) -> np.ndarray:
        d = np.asarray(self.direction, dtype=np.float64)
        return d / np.linalg.norm(d)

    def to_dict(self) -> Dict[str, Any]:
        return {"direction": [float(x) for x in self.direction], "intensity": self.intensity}


def make_albedo(desc: Dict[str, Any]) -> Albedo:
    """
    Build an albedo function from a descriptor.

    Supported types: ``constant`` (color), ``gradient`` (color_a -> color_b
    along ``axis`` over [-1, 1]) and ``checker`` (two colors, ``frequency``
    cells per unit).
    """
    kind = desc.get("type", "constant")
    if kind == "constant":
        color = np.asarray(desc.get("color", (1.0, 1.0, 1.0)), dtype=np.float64)
        return lambda p: np.broadcast_to(color, p.shape).copy()
    if kind == "gradient":
        a = np.asarray(desc["color_a"], dtype=np.float64)
        b = np.asarray(desc["color_b"], dtype=np.float64)
        axis = int(desc.get("axis", 1))

        def gradient(p: np.ndarray) -> np.ndarray:
            t = np.clip((p[:, axis] + 1.0) / 2.0, 0.0, 1.0)[:, None]
            return (1 - t) * a + t * b

        return gradient
    if kind == "checker":
        a = np.asarray(desc["color_a"], dtype=np.float64)
        b = np.asarray(desc["color_b"], dtype=np.float64)
        freq = float(desc.get("frequency", 4.0))

        def checker(p: np.ndarray) -> np.ndarray:
            parity = np.floor(p * freq).astype(np.int64).sum(axis=1) % 2
            return np.where(parity[:, None] == 0, a, b)

        return checker
    raise ConfigError(f"Unknown albedo type '{kind}'")


def fibonacci_cameras(
    n_views: int,
    resolution: int,
    radius: float = 3.0,
    focal: Optional[float] = None,
    seed: int = 0,
) -> List[Camera]:
    """Cameras on a Fibonacci sphere, rotated about y by a seeded azimuth."""
    if n_views < 1:
        raise ValueError("n_views must be >= 1")
    focal = focal if focal is not None else 1.25 * resolution
    offset = np.random.default_rng(seed).uniform(0.0, 2 * math.pi)
    golden = math.pi * (3.0 - math.sqrt(5.0))
    cameras = []
    for i in range(n_views):
        y = 1.0 - 2.0 * (i + 0.5) / n_views
        r = math.sqrt(max(0.0, 1.0 - y * y))
        theta = golden * i + offset
        eye = radius * np.array([r * math.cos(theta), y, r * math.sin(theta)])
        cameras.append(Camera.look_at(eye, focal=focal, width=resolution, height=resolution))
    return cameras


def sphere_trace(
    sdf: SdfField, origins: torch.Tensor, dirs: torch.Tensor, bound_radius: float = 1.2
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    March rays to the zero level set.

    Returns:
        (hit points, hit mask); rays that leave the bound or do not converge
        within the step budget are misses.
    """
    near, far, inside = ray_sphere_bounds(origins, dirs, bound_radius)
    t = near.clone()
    hit = torch.zeros_like(inside)
    active = inside.clone()
    with torch.no_grad():
        for _ in range(TRACE_STEPS):
            if not bool(active.any()):
                break
            p = origins[active] + t[active, None] * dirs[active]
            s = sdf.evaluate(p)
            idx = active.nonzero(as_tuple=True)[0]
            done = s.abs() < TRACE_TOL
            hit[idx[done]] = True
            t[idx[~done]] += s[~done]
            escaped = t > far
            active = active & ~hit & ~escaped
    points = origins + t[:, None] * dirs
    return points, hit


def shade_lambertian(
    normals: np.ndarray,
    albedo: np.ndarray,
    lights: Sequence[np.ndarray],
    intensities: Sequence[float],
    ambient: float,
) -> np.ndarray:
    """albedo * (ambient + sum_l intensity_l * max(0, n . l))."""
    shade = np.full(normals.shape[0], ambient, dtype=np.float64)
    for direction, intensity in zip(lights, intensities):
        shade += intensity * np.clip(normals @ direction, 0.0, None)
    return albedo * shade[:, None]


def render_ground_truth(
    sdf: SdfField,
    camera: Camera,
    albedo: Albedo,
    lights: Sequence[Light] = (),
    ambient: float = 0.1,
    background: Sequence[float] = (1.0, 1.0, 1.0),
    lights_follow_camera: bool = False,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Render one view.

    With ``lights_follow_camera`` light directions are given in the camera
    frame and rotate with it.

    Returns:
        (image (H, W, 3) in [0, 1], foreground mask (H, W)).
    """
    origins, dirs = camera_rays(camera)
    points, hit = sphere_trace(sdf, origins, dirs)
    image = np.tile(np.asarray(background, dtype=np.float64), (origins.shape[0], 1))
    if bool(hit.any()):
        p = points[hit]
        g = sdf.gradient(p)
        normals = (g / torch.linalg.norm(g, dim=-1, keepdim=True).clamp_min(1e-12)).numpy()
        directions = [light.unit() for light in lights]
        if lights_follow_camera:
            directions = [camera.rotation @ d for d in directions]
        colors = shade_lambertian(
            normals,
            albedo(p.numpy()),
            directions,
            [light.intensity for light in lights],
            ambient,
        )
        image[hit.numpy()] = colors
    h, w = camera.height, camera.width
    return np.clip(image, 0.0, 1.0).reshape(h, w, 3), hit.numpy().reshape(h, w)


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)


@dataclass
class MultiViewDataset:
    """Images (float RGB in [0, 1]) and cameras of one object."""

    images: List[np.ndarray]
    cameras: List[Camera]
    meta: Dict[str, Any] = field(default_factory=dict)
    object_id: str = "object"
    path: Optional[Path] = None

    def __len__(self) -> int:
        return len(self.images)

    def shape_field(self) -> Optional[SdfField]:
        """Ground-truth SDF when the meta file carries an analytic shape."""
        desc = self.meta.get("shape")
        if not desc:
            return None
        return field_from_descriptor(desc, self.path)

    def split(self, heldout: Sequence[int]) -> Tuple["MultiViewDataset", "MultiViewDataset"]:
        """(training views, held-out views)."""
        held = set(int(i) for i in heldout)
        for i in held:
            if not 0 <= i < len(self):
                raise ConfigError(f"Held-out view {i} out of range for {len(self)} views")
        keep = [i for i in range(len(self)) if i not in held]
        take = sorted(held)
        return (
            MultiViewDataset(
                [self.images[i] for i in keep], [self.cameras[i] for i in keep],
                self.meta, self.object_id, self.path,
            ),
            MultiViewDataset(
                [self.images[i] for i in take], [self.cameras[i] for i in take],
                self.meta, self.object_id, self.path,
            ),
        )


def write_cameras(cameras: Sequence[Camera], path: Path) -> Path:
    entries = [{"index": i, **cam.to_dict()} for i, cam in enumerate(cameras)]
    return write_yaml({"cameras": entries}, path)


def read_cameras(path: Path) -> List[Camera]:
    data = read_yaml(path)
    try:
        return [Camera.from_dict(entry) for entry in data["cameras"]]
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"Malformed camera file {path}: {e}") from e


def generate_synthetic_dataset(
    shape: SdfField,
    albedo: Union[Albedo, Dict[str, Any]],
    lights: Sequence[Light],
    n_views: int,
    resolution: int,
    seed: int,
    out_dir: Optional[Union[str, Path]] = None,
    ambient: float = 0.1,
    lights_follow_camera: bool = False,
    background: Sequence[float] = (1.0, 1.0, 1.0),
    radius: float = 3.0,
    object_id: str = "object",
) -> MultiViewDataset:
    """
    Render ``n_views`` ground-truth views of ``shape`` and optionally write them.

    Images are quantized to 8 bits in memory too, so the in-memory dataset
    equals what :func:`load_dataset` reads back.
    """
    albedo_desc = albedo if isinstance(albedo, dict) else None
    albedo_fn = make_albedo(albedo) if isinstance(albedo, dict) else albedo
    cameras = fibonacci_cameras(n_views, resolution, radius, seed=seed)
    images = []
    for cam in cameras:
        img, _ = render_ground_truth(
            shape, cam, albedo_fn, lights, ambient, background, lights_follow_camera
        )
        images.append(to_uint8(img).astype(np.float64) / 255.0)
    meta: Dict[str, Any] = {
        "object_id": object_id,
        "seed": int(seed),
        "n_views": int(n_views),
        "resolution": int(resolution),
        "ambient": float(ambient),
        "lights": [light.to_dict() for light in lights],
        "lights_follow_camera": bool(lights_follow_camera),
        "background": [float(c) for c in background],
        "albedo": albedo_desc,
    }
    try:
        meta["shape"] = shape.descriptor()
    except ConfigError:
        meta["shape"] = None
    dataset = MultiViewDataset(images, cameras, meta, object_id)
    if out_dir is not None:
        dataset.path = save_dataset(dataset, Path(out_dir))
    logger.info(
        format_fields(event="dataset_generated", object_id=object_id, views=n_views, res=resolution)
    )
    return dataset


def save_dataset(dataset: MultiViewDataset, out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    (out_dir / IMAGES_DIR).mkdir(parents=True, exist_ok=True)
    written = []
    for i, img in enumerate(dataset.images):
        path = out_dir / IMAGES_DIR / f"view_{i:04d}.png"
        imageio.imwrite(path, to_uint8(img))
        written.append(path)
    written.append(write_cameras(dataset.cameras, out_dir / CAMERAS_FILE))
    written.append(write_yaml(dataset.meta, out_dir / META_FILE))
    write_checksums(out_dir, written)
    return out_dir


def load_dataset(directory: Union[str, Path], verify: bool = False) -> MultiViewDataset:
    """Read a dataset directory; with ``verify`` the checksum file must match."""
    directory = Path(directory)
    if not (directory / CAMERAS_FILE).exists():
        raise FileNotFoundError(f"No {CAMERAS_FILE} in {directory}")
    if verify and not verify_checksums(directory):
        raise FormatError(f"Checksum mismatch in {directory}")
    cameras = read_cameras(directory / CAMERAS_FILE)
    meta = read_yaml(directory / META_FILE) if (directory / META_FILE).exists() else {}
    images = []
    for i in range(len(cameras)):
        path = directory / IMAGES_DIR / f"view_{i:04d}.png"
        if not path.exists():
            raise FileNotFoundError(f"Missing image {path}")
        data = np.asarray(imageio.imread(path))
        if data.ndim != 3 or data.shape[2] < 3:
            raise FormatError(f"{path} is not an RGB image")
        images.append(data[..., :3].astype(np.float64) / 255.0)
    return MultiViewDataset(images, cameras, meta, meta.get("object_id", directory.name), directory)


def light_from_dict(data: Dict[str, Any]) -> Light:
    return Light(tuple(data["direction"]), float(data.get("intensity", 1.0)))


def pixel_batch(
    dataset: MultiViewDataset, per_image: int, generator: torch.Generator
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    Random pixels from every image.

    Returns:
        (origins, directions, target colors), each (n_images * per_image, 3).
    """
    origins, dirs, colors = [], [], []
    for img, cam in zip(dataset.images, dataset.cameras):
        o, d = camera_rays(cam)
        idx = torch.randint(o.shape[0], (per_image,), generator=generator)
        origins.append(o[idx])
        dirs.append(d[idx])
        colors.append(torch.tensor(img.reshape(-1, 3), dtype=DTYPE)[idx])
    return torch.cat(origins), torch.cat(dirs), torch.cat(colors)
