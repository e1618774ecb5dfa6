"""
Signed Distance Field Module.

Signed distance fields on CPU float64 torch tensors: analytic primitives,
the k-box polycube with its Kreisselmeier-Steinhauser smooth union, sampled
grids, MLP-backed fields and a few combinators. Every field is negative
inside and positive outside.
"""

import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from .exceptions import ConfigError, FormatError
from .nn import DTYPE, Mlp, PosEncConfig, expand_code, pos_encode, spatial_gradient
from .utils import format_fields

logger = logging.getLogger(__name__)

GRID_MAGIC = b"SDFGRID\x00"
GRID_FORMAT_VERSION = 1
PROJECTION_TOL = 1e-4

ArrayLike = Union[torch.Tensor, np.ndarray, Sequence[float], Sequence[Sequence[float]]]
Triple = Tuple[float, float, float]


def _triple(values: Sequence[float], name: str) -> Triple:
    out = tuple(float(v) for v in values)
    if len(out) != 3:
        raise ValueError(f"{name} must have 3 components, got {len(out)}")
    if not all(math.isfinite(v) for v in out):
        raise ValueError(f"{name} must be finite")
    return out  # type: ignore[return-value]


@dataclass(frozen=True)
class BoxParams:
    """One axis-aligned box: center and half-extents (a, b, c)."""

    center: Triple
    half_extents: Triple

    def __post_init__(self):
        object.__setattr__(self, "center", _triple(self.center, "center"))
        object.__setattr__(self, "half_extents", _triple(self.half_extents, "half_extents"))
        if min(self.half_extents) <= 0:
            raise ValueError("Box half-extents must be > 0")

    @property
    def volume(self) -> float:
        a, b, c = self.half_extents
        return 8.0 * a * b * c

    def to_dict(self) -> Dict[str, List[float]]:
        return {"center": list(self.center), "half_extents": list(self.half_extents)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BoxParams":
        return cls(center=tuple(data["center"]), half_extents=tuple(data["half_extents"]))


@dataclass(frozen=True)
class PolycubeParams:
    """An ordered union of ``k >= 1`` boxes and the KS sharpness."""

    boxes: Tuple[BoxParams, ...]
    ks_lambda: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if len(self.boxes) < 1:
            raise ValueError("A polycube needs at least one box")
        if not math.isfinite(self.ks_lambda) or self.ks_lambda <= 0:
            raise ValueError("ks_lambda must be finite and > 0")

    @property
    def k(self) -> int:
        return len(self.boxes)

    def centers(self) -> torch.Tensor:
        return torch.tensor([b.center for b in self.boxes], dtype=DTYPE)

    def half_extents(self) -> torch.Tensor:
        return torch.tensor([b.half_extents for b in self.boxes], dtype=DTYPE)

    def centroid(self) -> Triple:
        """Volume-weighted mean of the box centers (overlaps counted twice)."""
        weights = np.array([b.volume for b in self.boxes])
        centers = np.array([b.center for b in self.boxes])
        return tuple((weights[:, None] * centers).sum(0) / weights.sum())  # type: ignore

    def scaled(self, factor: float, about: Optional[Sequence[float]] = None) -> "PolycubeParams":
        """Uniformly scale every box about ``about`` (default: the centroid)."""
        if factor <= 0:
            raise ValueError("Scale factor must be > 0")
        pivot = np.asarray(about if about is not None else self.centroid(), dtype=np.float64)
        boxes = []
        for box in self.boxes:
            center = pivot + factor * (np.asarray(box.center) - pivot)
            boxes.append(BoxParams(tuple(center), tuple(factor * h for h in box.half_extents)))
        return PolycubeParams(tuple(boxes), self.ks_lambda)

    def without_box(self, index: int) -> "PolycubeParams":
        """Drop box ``index``; the last box cannot be removed."""
        if self.k == 1:
            raise ValueError("Cannot remove the only box of a polycube")
        if not 0 <= index < self.k:
            raise IndexError(f"Box index {index} out of range for k={self.k}")
        return PolycubeParams(self.boxes[:index] + self.boxes[index + 1 :], self.ks_lambda)

    def to_dict(self) -> Dict[str, Any]:
        return {"ks_lambda": self.ks_lambda, "boxes": [b.to_dict() for b in self.boxes]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PolycubeParams":
        boxes = tuple(BoxParams.from_dict(b) for b in data["boxes"])
        return cls(boxes=boxes, ks_lambda=float(data.get("ks_lambda", 100.0)))


def as_points(p: ArrayLike) -> Tuple[torch.Tensor, bool]:
    """
    Coerce input to an (N, 3) float64 tensor.

    Returns:
        The tensor and whether the caller passed a single point.
    """
    t = p if isinstance(p, torch.Tensor) else torch.as_tensor(np.asarray(p, dtype=np.float64))
    t = t.to(DTYPE)
    single = t.dim() == 1
    if single:
        t = t.reshape(1, -1)
    if t.dim() != 2 or t.shape[1] != 3:
        raise ValueError(f"Points must have shape (3,) or (N, 3), got {tuple(t.shape)}")
    return t, single


def box_terms(points: torch.Tensor, centers: torch.Tensor, half: torch.Tensor) -> torch.Tensor:
    """Per-box SDFs phi_i(p) = max_axis(|p - c_i| - h_i), shape (N, k)."""
    d = (points[:, None, :] - centers[None, :, :]).abs() - half[None, :, :]
    return d.max(dim=-1).values


def ks_union(phi: torch.Tensor, ks_lambda: float) -> torch.Tensor:
    """Smooth minimum -(1/lambda) log sum exp(-lambda phi) over the last axis."""
    return -torch.logsumexp(-ks_lambda * phi, dim=-1) / ks_lambda


class SdfField:
    """
    Base class for signed distance fields.

    Subclasses implement :meth:`evaluate`. Gradients default to reverse-mode
    autodiff of :meth:`evaluate`; analytic variants override with closed forms.
    """

    kind = "field"

    def evaluate(self, points: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def __call__(self, points: torch.Tensor) -> torch.Tensor:
        return self.evaluate(points)

    def gradient(self, points: torch.Tensor, create_graph: bool = False) -> torch.Tensor:
        with torch.enable_grad():
            if create_graph and points.requires_grad:
                x = points
            else:
                x = points.detach().clone().requires_grad_(True)
            values = self.evaluate(x)
            return spatial_gradient(values, x, create_graph=create_graph)

    def descriptor(self) -> Dict[str, Any]:
        """YAML-ready description from which :func:`field_from_descriptor` rebuilds the field."""
        raise ConfigError(f"Field of kind '{self.kind}' has no descriptor")


class SphereSdf(SdfField):
    kind = "sphere"

    def __init__(self, center: Sequence[float] = (0.0, 0.0, 0.0), radius: float = 0.5):
        if radius <= 0:
            raise ValueError("Sphere radius must be > 0")
        self.center = torch.tensor(_triple(center, "center"), dtype=DTYPE)
        self.radius = float(radius)

    def evaluate(self, points: torch.Tensor) -> torch.Tensor:
        return torch.linalg.norm(points - self.center, dim=-1) - self.radius

    def gradient(self, points: torch.Tensor, create_graph: bool = False) -> torch.Tensor:
        d = points - self.center
        n = torch.linalg.norm(d, dim=-1, keepdim=True).clamp_min(1e-12)
        g = d / n
        return g if create_graph else g.detach()

    def descriptor(self) -> Dict[str, Any]:
        return {"type": "sphere", "center": self.center.tolist(), "radius": self.radius}


class BoxSdf(SdfField):
    """Axis-aligned box in the max-of-axes form; negative strictly inside."""

    kind = "box"

    def __init__(self, box: BoxParams):
        self.box = box
        self._center = torch.tensor(box.center, dtype=DTYPE)
        self._half = torch.tensor(box.half_extents, dtype=DTYPE)

    def evaluate(self, points: torch.Tensor) -> torch.Tensor:
        return ((points - self._center).abs() - self._half).max(dim=-1).values

    def gradient(self, points: torch.Tensor, create_graph: bool = False) -> torch.Tensor:
        d = points.detach() - self._center
        axis = (d.abs() - self._half).argmax(dim=-1)
        g = torch.zeros_like(d)
        g.scatter_(1, axis[:, None], torch.sign(d.gather(1, axis[:, None])))
        return g

    def descriptor(self) -> Dict[str, Any]:
        return {"type": "box", **self.box.to_dict()}


class TorusSdf(SdfField):
    """Torus around the z axis."""

    kind = "torus"

    def __init__(self, major: float, minor: float, center: Sequence[float] = (0.0, 0.0, 0.0)):
        if not 0 < minor < major:
            raise ValueError("Torus needs 0 < minor < major")
        self.major = float(major)
        self.minor = float(minor)
        self.center = torch.tensor(_triple(center, "center"), dtype=DTYPE)

    def evaluate(self, points: torch.Tensor) -> torch.Tensor:
        d = points - self.center
        ring = torch.sqrt(d[:, 0] ** 2 + d[:, 1] ** 2 + 1e-24) - self.major
        return torch.sqrt(ring**2 + d[:, 2] ** 2 + 1e-24) - self.minor

    def gradient(self, points: torch.Tensor, create_graph: bool = False) -> torch.Tensor:
        d = points if create_graph else points.detach()
        d = d - self.center
        rho = torch.sqrt(d[:, 0] ** 2 + d[:, 1] ** 2).clamp_min(1e-12)
        ring = rho - self.major
        q = torch.sqrt(ring**2 + d[:, 2] ** 2).clamp_min(1e-12)
        scale = ring / (q * rho)
        return torch.stack([d[:, 0] * scale, d[:, 1] * scale, d[:, 2] / q], dim=-1)

    def descriptor(self) -> Dict[str, Any]:
        return {
            "type": "torus",
            "major": self.major,
            "minor": self.minor,
            "center": self.center.tolist(),
        }


class PolycubeSdf(SdfField):
    """
    Union of axis-aligned boxes.

    With ``smooth=True`` the union is the KS smooth minimum, which is
    differentiable in the points and in ``centers`` / ``half_extents``
    (these may be leaf tensors with ``requires_grad``). With ``smooth=False``
    it is the exact hard union ``min_i phi_i``.
    """

    kind = "polycube"

    def __init__(
        self,
        centers: torch.Tensor,
        half_extents: torch.Tensor,
        ks_lambda: float = 100.0,
        smooth: bool = True,
    ):
        if centers.shape != half_extents.shape or centers.dim() != 2 or centers.shape[1] != 3:
            raise ValueError("centers and half_extents must both have shape (k, 3)")
        if ks_lambda <= 0:
            raise ValueError("ks_lambda must be > 0")
        self.centers = centers
        self.half_extents = half_extents
        self.ks_lambda = float(ks_lambda)
        self.smooth = smooth

    @classmethod
    def from_params(cls, params: PolycubeParams, smooth: bool = True) -> "PolycubeSdf":
        return cls(params.centers(), params.half_extents(), params.ks_lambda, smooth)

    @property
    def k(self) -> int:
        return int(self.centers.shape[0])

    def params(self) -> PolycubeParams:
        centers = self.centers.detach().tolist()
        half = self.half_extents.detach().tolist()
        boxes = tuple(BoxParams(tuple(c), tuple(h)) for c, h in zip(centers, half))
        return PolycubeParams(boxes, self.ks_lambda)

    def box_values(self, points: torch.Tensor) -> torch.Tensor:
        return box_terms(points, self.centers, self.half_extents)

    def evaluate(self, points: torch.Tensor) -> torch.Tensor:
        phi = self.box_values(points)
        if self.smooth:
            return ks_union(phi, self.ks_lambda)
        return phi.min(dim=-1).values

    def descriptor(self) -> Dict[str, Any]:
        return {"type": "polycube", "smooth": self.smooth, **self.params().to_dict()}


class GridSdf(SdfField):
    """
    Trilinearly interpolated samples on a regular grid.

    ``values`` has shape (nx, ny, nz) with sample ``[i, j, k]`` at
    ``bbox_min + (i, j, k) * cell``. Points outside the box are clamped onto it
    and the distance to the box is added.
    """

    kind = "grid"

    def __init__(
        self,
        values: torch.Tensor,
        bbox_min: Sequence[float] = (-1.0, -1.0, -1.0),
        bbox_max: Sequence[float] = (1.0, 1.0, 1.0),
        source: Optional[Dict[str, Any]] = None,
    ):
        values = torch.as_tensor(values, dtype=DTYPE)
        if values.dim() != 3 or min(values.shape) < 2:
            raise ValueError("Grid values must have shape (nx, ny, nz) with every n >= 2")
        if not bool(torch.isfinite(values).all()):
            raise FormatError("Grid SDF contains non-finite samples")
        self.values = values
        self.bbox_min = torch.tensor(_triple(bbox_min, "bbox_min"), dtype=DTYPE)
        self.bbox_max = torch.tensor(_triple(bbox_max, "bbox_max"), dtype=DTYPE)
        if bool((self.bbox_max <= self.bbox_min).any()):
            raise ValueError("Grid bbox_max must exceed bbox_min on every axis")
        self.resolution = tuple(int(n) for n in values.shape)
        self.cell = (self.bbox_max - self.bbox_min) / (torch.tensor(self.resolution, dtype=DTYPE) - 1)
        self.source = source

    @classmethod
    def from_field(
        cls,
        field: SdfField,
        resolution: int,
        bbox_min: Sequence[float] = (-1.0, -1.0, -1.0),
        bbox_max: Sequence[float] = (1.0, 1.0, 1.0),
        chunk: int = 65536,
    ) -> "GridSdf":
        """Sample ``field`` on a ``resolution``^3 lattice."""
        points = grid_points(resolution, bbox_min, bbox_max)
        with torch.no_grad():
            values = torch.cat([field.evaluate(c) for c in torch.split(points, chunk)])
        return cls(values.reshape(resolution, resolution, resolution), bbox_min, bbox_max)

    def evaluate(self, points: torch.Tensor) -> torch.Tensor:
        clamped = torch.maximum(torch.minimum(points, self.bbox_max), self.bbox_min)
        outside = torch.linalg.norm(points - clamped, dim=-1)
        res = torch.tensor(self.resolution, dtype=DTYPE)
        f = (clamped - self.bbox_min) / self.cell
        i0 = torch.minimum(f.floor(), res - 2).clamp_min(0).long()
        t = f - i0.to(DTYPE)
        _, ny, nz = self.resolution
        flat = self.values.reshape(-1)
        out = torch.zeros(points.shape[0], dtype=DTYPE)
        for dx in (0, 1):
            wx = t[:, 0] if dx else 1 - t[:, 0]
            for dy in (0, 1):
                wy = t[:, 1] if dy else 1 - t[:, 1]
                for dz in (0, 1):
                    wz = t[:, 2] if dz else 1 - t[:, 2]
                    idx = ((i0[:, 0] + dx) * ny + (i0[:, 1] + dy)) * nz + (i0[:, 2] + dz)
                    out = out + wx * wy * wz * flat[idx]
        return out + outside

    def gradient(self, points: torch.Tensor, create_graph: bool = False) -> torch.Tensor:
        h = 0.5 * float(self.cell.min())
        p = points if create_graph else points.detach()
        cols = []
        for axis in range(3):
            e = torch.zeros(3, dtype=DTYPE)
            e[axis] = h
            cols.append((self.evaluate(p + e) - self.evaluate(p - e)) / (2 * h))
        return torch.stack(cols, dim=-1)

    def descriptor(self) -> Dict[str, Any]:
        if self.source is None:
            raise ConfigError("Grid field was not loaded from a file; save it first")
        return dict(self.source)


def grid_points(
    resolution: int,
    bbox_min: Sequence[float] = (-1.0, -1.0, -1.0),
    bbox_max: Sequence[float] = (1.0, 1.0, 1.0),
) -> torch.Tensor:
    """Lattice points in (i, j, k) order with k fastest, shape (resolution^3, 3)."""
    axes = [
        torch.linspace(lo, hi, resolution, dtype=DTYPE) for lo, hi in zip(bbox_min, bbox_max)
    ]
    mesh = torch.meshgrid(*axes, indexing="ij")
    return torch.stack(mesh, dim=-1).reshape(-1, 3)


def save_grid(grid: GridSdf, path: Union[str, Path]) -> Path:
    """Write the binary grid format: header, bbox, resolution, x-fastest float32 samples."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = GRID_MAGIC + struct.pack("<I", GRID_FORMAT_VERSION) + b"\x00" * 4
    bbox = np.concatenate([grid.bbox_min.numpy(), grid.bbox_max.numpy()]).astype("<f8")
    res = np.asarray(grid.resolution, dtype="<u4")
    samples = grid.values.numpy().transpose(2, 1, 0).astype("<f4")
    with open(path, "wb") as f:
        f.write(header)
        f.write(bbox.tobytes())
        f.write(res.tobytes())
        f.write(samples.tobytes(order="C"))
    return path


def load_grid(path: Union[str, Path]) -> GridSdf:
    """Read a grid written by :func:`save_grid`."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 16 + 48 + 12 or data[:8] != GRID_MAGIC:
        raise FormatError(f"{path} is not an SDF grid file")
    (version,) = struct.unpack("<I", data[8:12])
    if version != GRID_FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported grid format version {version}")
    bbox = np.frombuffer(data, dtype="<f8", count=6, offset=16)
    res = np.frombuffer(data, dtype="<u4", count=3, offset=64).astype(int)
    count = int(np.prod(res))
    if len(data) != 76 + 4 * count:
        raise FormatError(f"{path}: expected {count} samples, file size does not match")
    samples = np.frombuffer(data, dtype="<f4", count=count, offset=76).astype(np.float64)
    if not np.isfinite(samples).all():
        raise FormatError(f"{path}: grid contains non-finite samples")
    values = samples.reshape(res[2], res[1], res[0]).transpose(2, 1, 0).copy()
    logger.debug(format_fields(event="grid_loaded", path=path, resolution=tuple(res)))
    return GridSdf(
        torch.from_numpy(values),
        bbox[:3],
        bbox[3:],
        source={"type": "grid", "path": str(path)},
    )


class MlpSdf(SdfField):
    """
    Coarse network SDF: ``|p - c| - r + MLP(pe(p) [+ z])``.

    The sphere prior keeps the zero level set well defined before training.
    """

    kind = "mlp"

    def __init__(
        self,
        network: Mlp,
        pos_enc: PosEncConfig,
        code: Optional[torch.Tensor] = None,
        prior_radius: float = 0.5,
        prior_center: Sequence[float] = (0.0, 0.0, 0.0),
    ):
        self.network = network
        self.pos_enc = pos_enc
        self.code = code
        self.prior_radius = float(prior_radius)
        self.prior_center = torch.tensor(_triple(prior_center, "prior_center"), dtype=DTYPE)

    def features(self, points: torch.Tensor) -> torch.Tensor:
        enc = pos_encode(points, self.pos_enc)
        code = expand_code(self.code, points.shape[0])
        return enc if code is None else torch.cat([enc, code], dim=-1)

    def evaluate(self, points: torch.Tensor) -> torch.Tensor:
        prior = torch.linalg.norm(points - self.prior_center, dim=-1) - self.prior_radius
        return prior + self.network(self.features(points))[:, 0]


class MeanSdf(SdfField):
    """Pointwise mean of several fields."""

    kind = "mean"

    def __init__(self, fields: Sequence[SdfField]):
        if not fields:
            raise ValueError("MeanSdf needs at least one field")
        self.fields = list(fields)

    def evaluate(self, points: torch.Tensor) -> torch.Tensor:
        return torch.stack([f.evaluate(points) for f in self.fields]).mean(dim=0)

    def descriptor(self) -> Dict[str, Any]:
        return {"type": "mean", "fields": [f.descriptor() for f in self.fields]}


class TranslatedSdf(SdfField):
    kind = "translate"

    def __init__(self, field: SdfField, offset: Sequence[float]):
        self.field = field
        self.offset = torch.tensor(_triple(offset, "offset"), dtype=DTYPE)

    def evaluate(self, points: torch.Tensor) -> torch.Tensor:
        return self.field.evaluate(points - self.offset)

    def gradient(self, points: torch.Tensor, create_graph: bool = False) -> torch.Tensor:
        return self.field.gradient(points - self.offset, create_graph=create_graph)

    def descriptor(self) -> Dict[str, Any]:
        return {"type": "translate", "offset": self.offset.tolist(), "field": self.field.descriptor()}


class ScaledSdf(SdfField):
    """``s * f((p - c) / s + c)``: uniform scale by ``s`` about ``c``."""

    kind = "scale"

    def __init__(self, field: SdfField, factor: float, about: Sequence[float] = (0.0, 0.0, 0.0)):
        if factor <= 0:
            raise ValueError("Scale factor must be > 0")
        self.field = field
        self.factor = float(factor)
        self.about = torch.tensor(_triple(about, "about"), dtype=DTYPE)

    def evaluate(self, points: torch.Tensor) -> torch.Tensor:
        local = (points - self.about) / self.factor + self.about
        return self.factor * self.field.evaluate(local)

    def gradient(self, points: torch.Tensor, create_graph: bool = False) -> torch.Tensor:
        local = (points - self.about) / self.factor + self.about
        return self.field.gradient(local, create_graph=create_graph)

    def descriptor(self) -> Dict[str, Any]:
        return {
            "type": "scale",
            "factor": self.factor,
            "about": self.about.tolist(),
            "field": self.field.descriptor(),
        }


def translate(field: SdfField, offset: Sequence[float]) -> SdfField:
    """
    Translate a field by ``offset``.

    Spheres, boxes, tori and polycubes stay in their own family so they
    remain usable as parametric domains.
    """
    t = np.asarray(_triple(offset, "offset"))
    if isinstance(field, SphereSdf):
        return SphereSdf(field.center.numpy() + t, field.radius)
    if isinstance(field, BoxSdf):
        return BoxSdf(BoxParams(tuple(np.asarray(field.box.center) + t), field.box.half_extents))
    if isinstance(field, TorusSdf):
        return TorusSdf(field.major, field.minor, field.center.numpy() + t)
    if isinstance(field, PolycubeSdf):
        shift = torch.as_tensor(t, dtype=DTYPE)
        return PolycubeSdf(
            field.centers.detach() + shift,
            field.half_extents.detach().clone(),
            field.ks_lambda,
            field.smooth,
        )
    return TranslatedSdf(field, offset)


def scale_field(
    field: SdfField, factor: float, about: Optional[Sequence[float]] = None
) -> SdfField:
    """
    Uniformly scale a field by ``factor`` about ``about``.

    The pivot defaults to the sphere center, box center or polycube centroid,
    and to the origin for every other field.
    """
    if factor <= 0:
        raise ValueError("Scale factor must be > 0")
    if isinstance(field, SphereSdf):
        pivot = np.asarray(about if about is not None else field.center.numpy(), dtype=float)
        center = pivot + factor * (field.center.numpy() - pivot)
        return SphereSdf(center, field.radius * factor)
    if isinstance(field, BoxSdf):
        pivot = about if about is not None else field.box.center
        params = PolycubeParams((field.box,)).scaled(factor, pivot)
        return BoxSdf(params.boxes[0])
    if isinstance(field, PolycubeSdf):
        return PolycubeSdf.from_params(field.params().scaled(factor, about), field.smooth)
    return ScaledSdf(field, factor, about if about is not None else (0.0, 0.0, 0.0))


def field_from_descriptor(desc: Dict[str, Any], base_dir: Optional[Path] = None) -> SdfField:
    """
    Build a field from a YAML descriptor.

    Supported types: sphere, box, torus, polycube, grid (binary file), mesh
    (OBJ converted to a grid), translate, scale, mean.
    """
    kind = desc.get("type")
    try:
        if kind == "sphere":
            return SphereSdf(desc.get("center", (0.0, 0.0, 0.0)), desc["radius"])
        if kind == "box":
            return BoxSdf(BoxParams.from_dict(desc))
        if kind == "torus":
            return TorusSdf(desc["major"], desc["minor"], desc.get("center", (0.0, 0.0, 0.0)))
        if kind == "polycube":
            params = PolycubeParams.from_dict(desc)
            return PolycubeSdf.from_params(params, smooth=bool(desc.get("smooth", True)))
        if kind == "grid":
            return load_grid(_resolve(desc["path"], base_dir))
        if kind == "mesh":
            from .mesh_ops import load_obj, mesh_to_grid_sdf

            path = _resolve(desc["path"], base_dir)
            grid = mesh_to_grid_sdf(load_obj(path), int(desc.get("resolution", 64)))
            grid.source = dict(desc)
            return grid
        if kind == "translate":
            return translate(field_from_descriptor(desc["field"], base_dir), desc["offset"])
        if kind == "scale":
            inner = field_from_descriptor(desc["field"], base_dir)
            return scale_field(inner, desc["factor"], desc.get("about"))
        if kind == "mean":
            return MeanSdf([field_from_descriptor(d, base_dir) for d in desc["fields"]])
    except KeyError as e:
        raise ConfigError(f"Field descriptor of type '{kind}' is missing key {e}") from e
    except ValueError as e:
        raise ConfigError(f"Invalid '{kind}' field descriptor: {e}") from e
    raise ConfigError(f"Unknown field type '{kind}'")


def _resolve(path: str, base_dir: Optional[Path]) -> Path:
    p = Path(path)
    if not p.is_absolute() and base_dir is not None:
        p = Path(base_dir) / p
    return p


# ---------------------------------------------------------------------------
# Point-wise API on plain arrays
# ---------------------------------------------------------------------------


def _finish(values: torch.Tensor, single: bool):
    arr = values.detach().cpu().numpy()
    return arr[0] if single else arr


def eval_box_sdf(box: BoxParams, p: ArrayLike):
    """max(|x - x_i| - a_i, |y - y_i| - b_i, |z - z_i| - c_i)."""
    pts, single = as_points(p)
    return _finish(BoxSdf(box).evaluate(pts), single)


def eval_polycube_exact(pc: PolycubeParams, p: ArrayLike):
    """Hard union ``min_i phi_i``."""
    pts, single = as_points(p)
    return _finish(PolycubeSdf.from_params(pc, smooth=False).evaluate(pts), single)


def eval_polycube_ks(pc: PolycubeParams, p: ArrayLike):
    """KS smooth union; lies within ``log(k)/lambda`` below the hard union."""
    pts, single = as_points(p)
    return _finish(PolycubeSdf.from_params(pc, smooth=True).evaluate(pts), single)


def eval_sdf(field: SdfField, p: ArrayLike):
    pts, single = as_points(p)
    with torch.no_grad():
        return _finish(field.evaluate(pts), single)


def grad_sdf(field: SdfField, p: ArrayLike):
    pts, single = as_points(p)
    return _finish(field.gradient(pts), single)


@dataclass
class ProjectionResult:
    """Outcome of projecting one point onto a zero level set."""

    point: np.ndarray
    converged: bool
    iterations: int
    residual: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "point": self.point.tolist(),
            "converged": self.converged,
            "iterations": self.iterations,
            "residual": self.residual,
        }


def project_points(
    field: SdfField, points: torch.Tensor, steps: int, tol: float = PROJECTION_TOL
) -> Tuple[torch.Tensor, torch.Tensor, int]:
    """
    Batched Newton projection ``q <- q - s grad / |grad|^2`` onto ``field = 0``.

    Points whose gradient vanishes stop moving and are reported as not converged.

    Returns:
        (projected points, converged mask, iterations used)
    """
    q = points.detach().clone()
    active = torch.ones(q.shape[0], dtype=torch.bool)
    degenerate = torch.zeros_like(active)
    iterations = 0
    for _ in range(steps):
        with torch.no_grad():
            s = field.evaluate(q)
        active = active & (s.abs() > tol) & ~degenerate
        if not bool(active.any()):
            break
        iterations += 1
        g = field.gradient(q[active])
        g2 = (g * g).sum(dim=-1)
        bad = g2 < 1e-12
        step = s[active][:, None] * g / g2.clamp_min(1e-12)[:, None]
        step[bad] = 0.0
        idx = active.nonzero(as_tuple=True)[0]
        degenerate[idx[bad]] = True
        q[active] = q[active] - step
    with torch.no_grad():
        residual = field.evaluate(q).abs()
    converged = (residual <= tol) & ~degenerate
    return q, converged, iterations


def project_to_surface(
    field: SdfField, p: ArrayLike, steps: int = 8, tol: float = PROJECTION_TOL
) -> ProjectionResult:
    """Project a single point onto the surface; see :func:`project_points`."""
    pts, _ = as_points(p)
    q, converged, iterations = project_points(field, pts[:1], steps, tol)
    with torch.no_grad():
        residual = float(field.evaluate(q).abs()[0])
    if not bool(converged[0]):
        logger.debug(format_fields(event="projection_not_converged", residual=residual))
    return ProjectionResult(q[0].numpy(), bool(converged[0]), iterations, residual)
