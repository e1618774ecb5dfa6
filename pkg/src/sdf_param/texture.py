"""
Texture Atlas Module.

Maps domain points to 2D texture charts, bakes the material network into an
atlas, and serves baked (or hand-edited) atlases back to the renderer as
material overrides.

Sphere domains use a six-face cubemap in the OpenGL face convention
(charts +x, -x, +y, -y, +z, -z). Polycube domains use six face charts per
box, chart ``6 * box + face`` with the same face order.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import imageio.v2 as imageio
import numpy as np
import torch
from scipy import ndimage

from .exceptions import AtlasMismatchError, ConfigError, FormatError
from .mesh_ops import TriangleMesh
from .nn import DTYPE
from .sdf_fields import box_terms, project_points
from .utils import format_fields, read_yaml, to_numpy, write_yaml

logger = logging.getLogger(__name__)

ATLAS_KINDS = ("sphere_cubemap", "polycube_faces")
ATLAS_MANIFEST = "atlas.yaml"
ATLAS_FORMAT_VERSION = 1
DEFAULT_WIDTH = 256
OCCUPANCY_TOL = 0.05
PULLBACK_STEPS = 3
FACE_NAMES = ("+x", "-x", "+y", "-y", "+z", "-z")
# in-face (u, v) axes of a box face, indexed by the face normal axis
FACE_TANGENTS = ((1, 2), (0, 2), (0, 1))


def atlas_kind_for(domain: Dict[str, Any]) -> str:
    """Atlas layout for a domain descriptor."""
    kind = domain.get("type")
    if kind == "sphere":
        return "sphere_cubemap"
    if kind in ("polycube", "box"):
        return "polycube_faces"
    raise ConfigError(f"No texture atlas layout for domain type '{kind}'")


def _boxes(domain: Dict[str, Any]) -> Tuple[torch.Tensor, torch.Tensor]:
    if domain.get("type") == "box":
        boxes = [domain]
    else:
        boxes = domain["boxes"]
    centers = torch.tensor([b["center"] for b in boxes], dtype=DTYPE)
    half = torch.tensor([b["half_extents"] for b in boxes], dtype=DTYPE)
    return centers, half


def chart_count(kind: str, domain: Dict[str, Any]) -> int:
    if kind == "sphere_cubemap":
        return 6
    if kind == "polycube_faces":
        return 6 * len(_boxes(domain)[0])
    raise ConfigError(f"Unknown atlas kind '{kind}'")


def _domain_signature(domain: Dict[str, Any]) -> np.ndarray:
    if domain.get("type") == "sphere":
        return np.array(list(domain["center"]) + [domain["radius"]], dtype=np.float64)
    centers, half = _boxes(domain)
    return torch.cat([centers.reshape(-1), half.reshape(-1)]).numpy()


def _cube_uv(d: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    absd = d.abs()
    axis = absd.argmax(dim=-1)
    major = d.gather(-1, axis[:, None])[:, 0]
    face = 2 * axis + (major < 0).long()
    x, y, z = d.unbind(-1)
    sc = torch.stack([-z, z, x, x, x, -x], dim=-1).gather(-1, face[:, None])[:, 0]
    tc = torch.stack([-y, -y, z, -z, -y, -y], dim=-1).gather(-1, face[:, None])[:, 0]
    ma = major.abs().clamp_min(1e-12)
    uv = torch.stack([0.5 * (sc / ma + 1.0), 0.5 * (tc / ma + 1.0)], dim=-1)
    return face, uv


def _cube_direction(face: torch.Tensor, uv: torch.Tensor) -> torch.Tensor:
    s = 2.0 * uv[:, 0] - 1.0
    t = 2.0 * uv[:, 1] - 1.0
    one = torch.ones_like(s)
    candidates = torch.stack(
        [
            torch.stack([one, -t, -s], dim=-1),
            torch.stack([-one, -t, s], dim=-1),
            torch.stack([s, one, t], dim=-1),
            torch.stack([s, -one, -t], dim=-1),
            torch.stack([s, -t, one], dim=-1),
            torch.stack([-s, -t, -one], dim=-1),
        ],
        dim=1,
    )
    d = candidates[torch.arange(face.shape[0]), face]
    return d / torch.linalg.norm(d, dim=-1, keepdim=True)


def _box_face_uv(q: torch.Tensor, half: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Nearest face and in-face coordinates of box-local points ``q``."""
    dist = torch.stack(
        [
            (half[:, 0] - q[:, 0]).abs(),
            (half[:, 0] + q[:, 0]).abs(),
            (half[:, 1] - q[:, 1]).abs(),
            (half[:, 1] + q[:, 1]).abs(),
            (half[:, 2] - q[:, 2]).abs(),
            (half[:, 2] + q[:, 2]).abs(),
        ],
        dim=-1,
    )
    face = dist.argmin(dim=-1)
    tangents = torch.tensor(FACE_TANGENTS, dtype=torch.long)[face // 2]
    qt = q.gather(-1, tangents)
    ht = half.gather(-1, tangents)
    uv = ((qt + ht) / (2.0 * ht)).clamp(0.0, 1.0)
    return face, uv


def domain_uv(kind: str, domain: Dict[str, Any], p_prime: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Chart id and in-chart (u, v) in [0, 1]^2 for each domain point.

    Returns:
        (chart ids of shape (N,), uv of shape (N, 2))
    """
    p_prime = p_prime.detach()
    if kind == "sphere_cubemap":
        center = torch.tensor(domain["center"], dtype=DTYPE)
        return _cube_uv(p_prime - center)
    if kind == "polycube_faces":
        centers, half = _boxes(domain)
        nearest = box_terms(p_prime, centers, half).argmin(dim=-1)
        face, uv = _box_face_uv(p_prime - centers[nearest], half[nearest])
        return 6 * nearest + face, uv
    raise ConfigError(f"Unknown atlas kind '{kind}'")


def uv_to_domain(kind: str, domain: Dict[str, Any], chart: torch.Tensor, uv: torch.Tensor) -> torch.Tensor:
    """Inverse of :func:`domain_uv`: the domain surface point of each chart coordinate."""
    chart = chart.long()
    if kind == "sphere_cubemap":
        center = torch.tensor(domain["center"], dtype=DTYPE)
        return center + float(domain["radius"]) * _cube_direction(chart, uv)
    if kind == "polycube_faces":
        centers, half = _boxes(domain)
        box, face = chart // 6, chart % 6
        h = half[box]
        axis = face // 2
        sign = 1.0 - 2.0 * (face % 2).to(DTYPE)
        q = torch.zeros_like(h)
        q.scatter_(-1, axis[:, None], (sign * h.gather(-1, axis[:, None])[:, 0])[:, None])
        tangents = torch.tensor(FACE_TANGENTS, dtype=torch.long)[axis]
        q.scatter_(-1, tangents, (2.0 * uv - 1.0) * h.gather(-1, tangents))
        return centers[box] + q
    raise ConfigError(f"Unknown atlas kind '{kind}'")


@dataclass
class TextureAtlas:
    """
    Square RGB charts over one domain.

    ``charts`` has shape (C, W, W, 3) with values in [0, 1], row index along
    v and column index along u. ``occupancy`` marks texels whose pullback
    reached the surface.
    """

    kind: str
    charts: np.ndarray
    domain: Dict[str, Any]
    occupancy: Optional[np.ndarray] = None
    object_id: Optional[str] = None
    _table: Optional[torch.Tensor] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.kind not in ATLAS_KINDS:
            raise ConfigError(f"Atlas kind must be one of {ATLAS_KINDS}, got '{self.kind}'")
        self.charts = np.asarray(self.charts, dtype=np.float64)
        if self.charts.ndim != 4 or self.charts.shape[3] != 3 or self.charts.shape[1] != self.charts.shape[2]:
            raise ValueError("Atlas charts must have shape (C, W, W, 3)")
        w = self.width
        if w < 1 or w & (w - 1):
            raise ValueError(f"Atlas width must be a power of two, got {w}")
        expected = chart_count(self.kind, self.domain)
        if len(self.charts) != expected:
            raise ValueError(f"'{self.kind}' atlas needs {expected} charts, got {len(self.charts)}")
        if self.occupancy is None:
            self.occupancy = np.ones(self.charts.shape[:3], dtype=bool)
        self.occupancy = np.asarray(self.occupancy, dtype=bool)
        if self.occupancy.shape != self.charts.shape[:3]:
            raise ValueError("Occupancy mask must have shape (C, W, W)")

    @property
    def width(self) -> int:
        return int(self.charts.shape[1])

    @property
    def n_charts(self) -> int:
        return int(self.charts.shape[0])

    def sample(self, chart: torch.Tensor, uv: torch.Tensor) -> torch.Tensor:
        """Bilinear chart lookup with texel centers at ``(i + 0.5) / W``."""
        if self._table is None:
            self._table = torch.as_tensor(self.charts, dtype=DTYPE).reshape(-1, 3)
        w = self.width
        xy = (uv * w - 0.5).clamp(0.0, w - 1.0)
        i0 = xy.floor().clamp(max=max(w - 2, 0)).long()
        t = xy - i0.to(DTYPE)
        i1 = (i0 + 1).clamp(max=w - 1)
        base = chart.long() * w * w
        out = torch.zeros(uv.shape[0], 3, dtype=DTYPE)
        for col, wx in ((i0[:, 0], 1 - t[:, 0]), (i1[:, 0], t[:, 0])):
            for row, wy in ((i0[:, 1], 1 - t[:, 1]), (i1[:, 1], t[:, 1])):
                out = out + (wx * wy)[:, None] * self._table[base + row * w + col]
        return out

    def lookup(self, p_prime: torch.Tensor) -> torch.Tensor:
        """Material at domain points, shape (N, 3)."""
        chart, uv = domain_uv(self.kind, self.domain, p_prime)
        return self.sample(chart, uv)

    def check_domain(self, domain_field) -> None:
        """Refuse a domain with a different layout; warn if it only moved."""
        try:
            desc = domain_field.descriptor()
            kind = atlas_kind_for(desc)
        except ConfigError as e:
            raise AtlasMismatchError(f"Domain cannot carry a texture atlas: {e}") from e
        if kind != self.kind:
            raise AtlasMismatchError(f"Atlas is '{self.kind}' but the domain needs '{kind}'")
        if chart_count(kind, desc) != self.n_charts:
            raise AtlasMismatchError(
                f"Atlas has {self.n_charts} charts but the domain needs {chart_count(kind, desc)}"
            )
        a, b = _domain_signature(self.domain), _domain_signature(desc)
        if a.shape != b.shape or not np.allclose(a, b, atol=1e-6):
            logger.warning(format_fields(event="atlas_domain_moved", kind=kind))


@dataclass
class TextureOverride:
    """Render-ready material source: an atlas applied to a target object."""

    atlas: TextureAtlas
    target: str

    def lookup(self, p_prime: torch.Tensor) -> torch.Tensor:
        return self.atlas.lookup(p_prime)

    def check_domain(self, domain_field) -> None:
        self.atlas.check_domain(domain_field)


def texel_grid(width: int, supersampling: int = 1) -> torch.Tensor:
    """Sub-texel uv sample positions, shape (W, W, s*s, 2), indexed [row, col]."""
    s = supersampling
    offsets = (torch.arange(s, dtype=DTYPE) + 0.5) / s
    texel = torch.arange(width, dtype=DTYPE)
    u = (texel[:, None] + offsets[None, :]).reshape(-1) / width
    rows, cols = torch.meshgrid(u, u, indexing="ij")
    uv = torch.stack([cols, rows], dim=-1)
    uv = uv.reshape(width, s, width, s, 2).permute(0, 2, 1, 3, 4)
    return uv.reshape(width, width, s * s, 2)


def _surface_materials(
    bundle, object_id: str, p_domain: torch.Tensor, chunk: int
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Pull domain points back to the surface and shade them with the material network."""
    deform, app = bundle.deform, bundle.appearance
    composed = deform.composed_field(object_id)
    colors, occupied = [], []
    for start in range(0, p_domain.shape[0], chunk):
        pd = p_domain[start : start + chunk]
        with torch.no_grad():
            p = deform.inverse_map(pd, object_id)
            hit = (composed.evaluate(p).abs() <= OCCUPANCY_TOL) & (
                deform.domain.evaluate(pd).abs() <= OCCUPANCY_TOL
            )
        p, _, _ = project_points(composed, p, PULLBACK_STEPS)
        normals = composed.gradient(p)
        normals = normals / torch.linalg.norm(normals, dim=-1, keepdim=True).clamp_min(1e-12)
        with torch.no_grad():
            p_prime = deform.forward_map(p, object_id)
            colors.append(app.material(p_prime, normals, object_id))
        occupied.append(hit)
    return torch.cat(colors), torch.cat(occupied)


def _fill_unoccupied(chart: np.ndarray, occupied: np.ndarray) -> np.ndarray:
    """Copy the nearest occupied texel into every unoccupied one."""
    if occupied.all() or not occupied.any():
        return chart
    _, (rows, cols) = ndimage.distance_transform_edt(~occupied, return_indices=True)
    return chart[rows, cols]


def bake_texture(
    bundle,
    object_id: str,
    width: int = DEFAULT_WIDTH,
    supersampling: int = 2,
    kind: Optional[str] = None,
    chunk: int = 16384,
) -> TextureAtlas:
    """
    Bake the material network of ``object_id`` into an atlas over the bundle's domain.

    Each texel averages ``supersampling``^2 sub-samples whose pullback lands on
    the surface. A texel is occupied when at least half of its sub-samples
    do; unoccupied texels take the color of the nearest occupied texel.
    """
    if supersampling < 1:
        raise ValueError("supersampling must be >= 1")
    domain = bundle.deform.domain.descriptor()
    kind = kind or atlas_kind_for(domain)
    if kind != atlas_kind_for(domain):
        raise ConfigError(f"Atlas kind '{kind}' does not fit a '{domain['type']}' domain")
    n_charts = chart_count(kind, domain)
    grid = texel_grid(width, supersampling).reshape(-1, 2)
    n_sub = supersampling * supersampling

    charts = np.zeros((n_charts, width, width, 3))
    occupancy = np.zeros((n_charts, width, width), dtype=bool)
    for c in range(n_charts):
        chart_ids = torch.full((grid.shape[0],), c, dtype=torch.long)
        p_domain = uv_to_domain(kind, domain, chart_ids, grid)
        colors, hit = _surface_materials(bundle, object_id, p_domain, chunk)
        colors = to_numpy(colors).reshape(width, width, n_sub, 3)
        hit = to_numpy(hit).reshape(width, width, n_sub) > 0
        count = hit.sum(axis=-1)
        summed = (colors * hit[..., None]).sum(axis=-2)
        mean = np.where(count[..., None] > 0, summed / np.maximum(count, 1)[..., None], 0.0)
        occupancy[c] = 2 * count >= n_sub
        charts[c] = _fill_unoccupied(mean, occupancy[c])
    logger.info(
        format_fields(
            event="texture_baked",
            object_id=object_id,
            kind=kind,
            width=width,
            occupancy=round(float(occupancy.mean()), 4),
        )
    )
    return TextureAtlas(kind, charts, domain, occupancy, object_id)


def transfer_texture(
    bundle,
    source: Union[TextureAtlas, str],
    target: str,
    width: int = DEFAULT_WIDTH,
    supersampling: int = 2,
) -> TextureOverride:
    """
    Apply a source atlas (or a freshly baked atlas of a source object) to ``target``.

    The objects share the domain, so the target reads the source material
    through the same chart mapping while keeping its own shading.
    """
    if target not in bundle.deform.object_ids:
        raise ConfigError(f"Unknown target object '{target}'")
    atlas = source
    if isinstance(source, str):
        atlas = bake_texture(bundle, source, width, supersampling)
    atlas.check_domain(bundle.deform.domain)
    logger.info(format_fields(event="texture_transfer", source=atlas.object_id, target=target))
    return TextureOverride(atlas, target)


def assign_uv(mesh: TriangleMesh, kind: str, domain: Dict[str, Any]) -> TriangleMesh:
    """Per-vertex chart and uv from the mapped (or, failing that, original) positions."""
    positions = mesh.mapped if mesh.mapped is not None else mesh.vertices
    chart, uv = domain_uv(kind, domain, torch.as_tensor(positions, dtype=DTYPE))
    return TriangleMesh(
        mesh.vertices.copy(),
        mesh.faces.copy(),
        mapped=None if mesh.mapped is None else mesh.mapped.copy(),
        uv=to_numpy(uv),
        chart=chart.numpy(),
    )


def _chart_names(kind: str, index: int) -> Tuple[str, str]:
    return f"chart_{kind}_{index}.png", f"occupancy_{kind}_{index}.png"


def save_atlas(atlas: TextureAtlas, directory: Union[str, Path]) -> Path:
    """Write one PNG per chart, one occupancy PNG per chart and the manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(atlas.n_charts):
        image_name, mask_name = _chart_names(atlas.kind, i)
        rgb = np.clip(np.rint(atlas.charts[i] * 255.0), 0, 255).astype(np.uint8)
        imageio.imwrite(directory / image_name, rgb)
        imageio.imwrite(directory / mask_name, atlas.occupancy[i].astype(np.uint8) * 255)
        entries.append({"id": i, "image": image_name, "occupancy": mask_name})
    manifest = {
        "format_version": ATLAS_FORMAT_VERSION,
        "kind": atlas.kind,
        "width": atlas.width,
        "object_id": atlas.object_id,
        "domain": atlas.domain,
        "charts": entries,
    }
    path = write_yaml(manifest, directory / ATLAS_MANIFEST)
    logger.debug(format_fields(event="atlas_saved", path=directory, charts=atlas.n_charts))
    return path


def _read_png(path: Path, width: int, channels: int) -> np.ndarray:
    if not path.exists():
        raise FormatError(f"Missing atlas image {path}")
    data = np.asarray(imageio.imread(path))
    if data.shape[:2] != (width, width):
        raise FormatError(f"{path} is {data.shape[1]}x{data.shape[0]}, expected {width}x{width}")
    if data.ndim == 2:
        data = data[..., None]
    if channels == 3 and data.shape[2] == 1:
        data = np.repeat(data, 3, axis=2)
    return data[..., :channels]


def load_atlas(path: Union[str, Path]) -> TextureAtlas:
    """Read an atlas directory (or its manifest); edited chart PNGs are taken as-is."""
    path = Path(path)
    manifest_path = path / ATLAS_MANIFEST if path.is_dir() else path
    if not manifest_path.exists():
        raise FileNotFoundError(f"No atlas manifest at {manifest_path}")
    manifest = read_yaml(manifest_path)
    directory = manifest_path.parent
    try:
        if manifest["format_version"] != ATLAS_FORMAT_VERSION:
            raise FormatError(f"Unsupported atlas format version {manifest['format_version']}")
        width = int(manifest["width"])
        entries = sorted(manifest["charts"], key=lambda e: e["id"])
        charts = [_read_png(directory / e["image"], width, 3) / 255.0 for e in entries]
        masks = [_read_png(directory / e["occupancy"], width, 1)[..., 0] > 127 for e in entries]
        return TextureAtlas(
            manifest["kind"],
            np.stack(charts),
            manifest["domain"],
            np.stack(masks),
            manifest.get("object_id"),
        )
    except (KeyError, TypeError) as e:
        raise FormatError(f"Malformed atlas manifest {manifest_path}: {e}") from e
    except (ValueError, ConfigError) as e:
        raise FormatError(f"Invalid atlas in {directory}: {e}") from e
