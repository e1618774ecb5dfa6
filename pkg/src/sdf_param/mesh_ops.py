"""
Mesh Operations Module.

Zero level-set extraction, forward-mapped domain meshes, per-triangle
distortion metrics, Chamfer distance, OBJ files and the offline mesh to
grid-SDF conversion.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from scipy.spatial import cKDTree
from skimage import measure

from .exceptions import FormatError
from .nn import DTYPE
from .sdf_fields import GridSdf, SdfField, grid_points
from .utils import format_fields, to_numpy, write_yaml

logger = logging.getLogger(__name__)

WELD_TOL = 1e-7
DEGENERATE_AREA = 1e-12
HIST_BINS = 16
HIST_RANGE = (1.0, 4.0)
BRUTE_FORCE_LIMIT = 50_000
MAX_MESH_GRID_RESOLUTION = 128
MESH_NORMALIZE_EXTENT = 0.9


@dataclass
class TriangleMesh:
    """
    Indexed triangle mesh.

    ``mapped`` holds the per-vertex image under the forward map, ``uv`` and
    ``chart`` the per-vertex texture coordinates inside their atlas chart.
    """

    vertices: np.ndarray
    faces: np.ndarray
    mapped: Optional[np.ndarray] = None
    uv: Optional[np.ndarray] = None
    chart: Optional[np.ndarray] = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        n = len(self.vertices)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= n):
            raise ValueError("Face index out of range")
        if self.mapped is not None:
            self.mapped = np.asarray(self.mapped, dtype=np.float64).reshape(-1, 3)
            if len(self.mapped) != n:
                raise ValueError("Mapped positions must match the vertex count")
        if (self.uv is None) != (self.chart is None):
            raise ValueError("uv and chart must be given together")
        if self.uv is not None:
            self.uv = np.asarray(self.uv, dtype=np.float64).reshape(-1, 2)
            self.chart = np.asarray(self.chart, dtype=np.int64).reshape(-1)
            if len(self.uv) != n or len(self.chart) != n:
                raise ValueError("uv and chart must match the vertex count")

    @property
    def is_empty(self) -> bool:
        return len(self.faces) == 0

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def edges(self) -> Tuple[np.ndarray, np.ndarray]:
        """Unique undirected edges (E, 2) and how many faces share each."""
        if self.is_empty:
            return np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64)
        f = self.faces
        all_edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        all_edges.sort(axis=1)
        return np.unique(all_edges, axis=0, return_counts=True)

    def euler_characteristic(self) -> int:
        edges, _ = self.edges()
        return self.n_vertices - len(edges) + self.n_faces

    def is_two_manifold(self) -> bool:
        """Every edge is shared by exactly two faces."""
        _, counts = self.edges()
        return bool(counts.size) and bool(np.all(counts == 2))

    def face_areas(self, positions: Optional[np.ndarray] = None) -> np.ndarray:
        return triangle_areas(self.triangles(positions))

    def total_area(self) -> float:
        return float(self.face_areas().sum())

    def triangles(self, positions: Optional[np.ndarray] = None) -> np.ndarray:
        """Corner positions per face, shape (F, 3, 3)."""
        pos = self.vertices if positions is None else positions
        return pos[self.faces]

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        if not len(self.vertices):
            raise ValueError("Mesh has no vertices")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def triangle_areas(tris: np.ndarray) -> np.ndarray:
    cross = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    return 0.5 * np.linalg.norm(cross, axis=-1)


def weld_vertices(
    vertices: np.ndarray, faces: np.ndarray, tol: float = WELD_TOL
) -> Tuple[np.ndarray, np.ndarray]:
    """Merge vertices that agree to ``tol``, keeping first-seen order."""
    if not len(vertices):
        return vertices, faces
    keys = np.round(vertices / tol).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return vertices[first[order]], rank[inverse][faces]


def clean_mesh(vertices: np.ndarray, faces: np.ndarray) -> TriangleMesh:
    """Weld, drop degenerate faces, then drop unreferenced vertices."""
    vertices, faces = weld_vertices(vertices, faces)
    distinct = (
        (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])
    )
    faces = faces[distinct]
    faces = faces[triangle_areas(vertices[faces]) >= DEGENERATE_AREA]
    used, remap = np.unique(faces, return_inverse=True)
    return TriangleMesh(vertices[used], remap.reshape(-1, 3))


def orient_outward(mesh: TriangleMesh) -> TriangleMesh:
    """Flip the winding if the enclosed signed volume is negative."""
    if mesh.is_empty:
        return mesh
    tris = mesh.triangles()
    volume = np.einsum("ij,ij->i", tris[:, 0], np.cross(tris[:, 1], tris[:, 2])).sum() / 6.0
    if volume < 0:
        mesh.faces = mesh.faces[:, ::-1].copy()
    return mesh


def sample_volume(
    field: SdfField,
    resolution: int,
    bbox_min: Sequence[float] = (-1.0, -1.0, -1.0),
    bbox_max: Sequence[float] = (1.0, 1.0, 1.0),
    chunk: int = 65536,
) -> np.ndarray:
    """Field samples on the lattice, shape (res, res, res), slab by slab."""
    points = grid_points(resolution, bbox_min, bbox_max)
    with torch.no_grad():
        values = torch.cat([field.evaluate(c) for c in torch.split(points, chunk)])
    return to_numpy(values).reshape(resolution, resolution, resolution)


def marching_cubes(
    field: SdfField,
    resolution: int = 64,
    iso: float = 0.0,
    bbox_min: Sequence[float] = (-1.0, -1.0, -1.0),
    bbox_max: Sequence[float] = (1.0, 1.0, 1.0),
) -> TriangleMesh:
    """
    Extract the ``iso`` level set of ``field`` on a uniform lattice.

    Returns an empty mesh (with a warning) when the field never crosses
    ``iso`` inside the box.
    """
    if resolution < 8:
        raise ValueError("Marching cubes resolution must be >= 8")
    volume = sample_volume(field, resolution, bbox_min, bbox_max)
    if not (volume.min() < iso < volume.max()):
        logger.warning(format_fields(event="empty_mesh", reason="no_crossing", iso=iso))
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    lo = np.asarray(bbox_min, dtype=np.float64)
    spacing = (np.asarray(bbox_max, dtype=np.float64) - lo) / (resolution - 1)
    verts, faces, _, _ = measure.marching_cubes(
        volume, level=iso, spacing=tuple(spacing), allow_degenerate=False
    )
    mesh = orient_outward(clean_mesh(verts.astype(np.float64) + lo, faces.astype(np.int64)))
    logger.info(
        format_fields(
            event="mesh_extracted", resolution=resolution, vertices=mesh.n_vertices, faces=mesh.n_faces
        )
    )
    return mesh


def map_mesh(mesh: TriangleMesh, deform, z, chunk: int = 65536) -> TriangleMesh:
    """Attach the forward-mapped position of every vertex."""
    if mesh.is_empty:
        raise ValueError("Cannot map an empty mesh")
    verts = torch.as_tensor(mesh.vertices, dtype=DTYPE)
    with torch.no_grad():
        mapped = torch.cat([deform.forward_map(c, z) for c in torch.split(verts, chunk)])
    return TriangleMesh(
        mesh.vertices.copy(),
        mesh.faces.copy(),
        mapped=to_numpy(mapped),
        uv=None if mesh.uv is None else mesh.uv.copy(),
        chart=None if mesh.chart is None else mesh.chart.copy(),
    )


def _cot_at_corners(tris: np.ndarray) -> np.ndarray:
    """Cotangent of the interior angle at each corner, shape (F, 3)."""
    cots = []
    for i in range(3):
        e1 = tris[:, (i + 1) % 3] - tris[:, i]
        e2 = tris[:, (i + 2) % 3] - tris[:, i]
        dot = np.einsum("ij,ij->i", e1, e2)
        cots.append(dot / np.linalg.norm(np.cross(e1, e2), axis=-1))
    return np.stack(cots, axis=-1)


def _opposite_sides_sq(tris: np.ndarray) -> np.ndarray:
    """Squared length of the side opposite each corner, shape (F, 3)."""
    sides = []
    for i in range(3):
        d = tris[:, (i + 2) % 3] - tris[:, (i + 1) % 3]
        sides.append(np.einsum("ij,ij->i", d, d))
    return np.stack(sides, axis=-1)


def angle_distortion_batch(original: np.ndarray, mapped: np.ndarray) -> np.ndarray:
    """
    Per-triangle conformal distortion.

    E = sum_i cot(theta_i) * |s_i|^2 / (4 * area), where theta_i is the mapped
    angle at corner i, s_i the original side opposite corner i and area the
    original triangle area. Inputs have shape (F, 3, 3).
    """
    original = np.asarray(original, dtype=np.float64)
    mapped = np.asarray(mapped, dtype=np.float64)
    energy = (_cot_at_corners(mapped) * _opposite_sides_sq(original)).sum(axis=-1)
    return energy / (4.0 * triangle_areas(original))


def angle_distortion(original: np.ndarray, mapped: np.ndarray) -> float:
    """Conformal distortion of one triangle given as (3, 3) corner arrays."""
    orig = np.asarray(original, dtype=np.float64).reshape(1, 3, 3)
    mapp = np.asarray(mapped, dtype=np.float64).reshape(1, 3, 3)
    if triangle_areas(orig)[0] < DEGENERATE_AREA or triangle_areas(mapp)[0] < DEGENERATE_AREA:
        raise ValueError("Degenerate triangle")
    return float(angle_distortion_batch(orig, mapp)[0])


def area_distortion(area_orig, area_mapped):
    """Symmetric area ratio mean 0.5 * (r + 1/r); works on scalars and arrays."""
    a = np.asarray(area_orig, dtype=np.float64)
    b = np.asarray(area_mapped, dtype=np.float64)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("Areas must be positive")
    out = 0.5 * (a / b + b / a)
    return float(out) if out.ndim == 0 else out


def distortion_histogram(values: np.ndarray) -> np.ndarray:
    """Counts in HIST_BINS equal bins over HIST_RANGE followed by an overflow bin."""
    lo, hi = HIST_RANGE
    counts, _ = np.histogram(np.clip(values[values <= hi], lo, hi), bins=HIST_BINS, range=HIST_RANGE)
    return np.append(counts, int(np.sum(values > hi)))


@dataclass
class DistortionReport:
    """Per-triangle distortion with area-weighted summaries."""

    angle: np.ndarray
    area: np.ndarray
    weights: np.ndarray
    excluded: int
    mean_angle: float = field(init=False)
    mean_area: float = field(init=False)
    hist_angle: np.ndarray = field(init=False)
    hist_area: np.ndarray = field(init=False)

    def __post_init__(self):
        valid = np.isfinite(self.angle) & np.isfinite(self.area)
        w = self.weights[valid]
        if w.size and w.sum() > 0:
            self.mean_angle = float((self.angle[valid] * w).sum() / w.sum())
            self.mean_area = float((self.area[valid] * w).sum() / w.sum())
        else:
            self.mean_angle = self.mean_area = math.nan
        self.hist_angle = distortion_histogram(self.angle[valid])
        self.hist_area = distortion_histogram(self.area[valid])

    def summary(self) -> Dict[str, Any]:
        edges = np.linspace(*HIST_RANGE, HIST_BINS + 1)
        return {
            "triangles": int(len(self.angle)),
            "excluded_degenerate": int(self.excluded),
            "mean_angle": self.mean_angle,
            "mean_area": self.mean_area,
            "aggregation": "area_weighted_original",
            "histogram": {
                "bin_edges": [float(e) for e in edges],
                "angle": [int(c) for c in self.hist_angle],
                "area": [int(c) for c in self.hist_area],
            },
        }

    def save(self, directory: Union[str, Path], stem: str = "distortion") -> Tuple[Path, Path]:
        """Write ``{stem}.yaml`` (summary) and ``{stem}.csv`` (per triangle)."""
        directory = Path(directory)
        summary_path = write_yaml(self.summary(), directory / f"{stem}.yaml")
        table_path = directory / f"{stem}.csv"
        with open(table_path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["triangle", "e_angle", "e_area", "area"])
            for i, (ea, er, w) in enumerate(zip(self.angle, self.area, self.weights)):
                writer.writerow([i, repr(float(ea)), repr(float(er)), repr(float(w))])
        return summary_path, table_path


def distortion_report(mesh: TriangleMesh) -> DistortionReport:
    """Angle and area distortion of the map from ``mesh.vertices`` to ``mesh.mapped``."""
    if mesh.mapped is None:
        raise ValueError("Mesh has no mapped positions; run map_mesh first")
    orig = mesh.triangles()
    mapped = mesh.triangles(mesh.mapped)
    a_orig = triangle_areas(orig)
    a_mapped = triangle_areas(mapped)
    valid = (a_orig >= DEGENERATE_AREA) & (a_mapped >= DEGENERATE_AREA)

    angle = np.full(mesh.n_faces, np.nan)
    area = np.full(mesh.n_faces, np.nan)
    angle[valid] = angle_distortion_batch(orig[valid], mapped[valid])
    area[valid] = area_distortion(a_orig[valid], a_mapped[valid])
    excluded = int((~valid).sum())
    if excluded:
        logger.debug(format_fields(event="degenerate_triangles", excluded=excluded))
    return DistortionReport(angle=angle, area=area, weights=a_orig, excluded=excluded)


def _nearest_sq_brute(src: np.ndarray, dst: np.ndarray, chunk: int = 128) -> np.ndarray:
    out = np.empty(len(src))
    for start in range(0, len(src), chunk):
        diff = src[start : start + chunk, None, :] - dst[None, :, :]
        out[start : start + chunk] = np.einsum("ijk,ijk->ij", diff, diff).min(axis=1)
    return out


def _nearest_sq_kdtree(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    _, idx = cKDTree(dst).query(src, k=1)
    diff = src - dst[idx]
    return np.einsum("ij,ij->i", diff, diff)


def chamfer_distance(a, b, method: str = "auto") -> float:
    """
    Symmetric Chamfer distance with squared nearest-neighbour distances.

    CD = 0.5 * (mean_a min_b |a-b|^2 + mean_b min_a |a-b|^2).

    Args:
        a, b: point sets of shape (N, 3) (arrays or tensors)
        method: "brute", "kdtree" or "auto" (brute force up to 5e4 points per set)
    """
    a = to_numpy(a).reshape(-1, 3)
    b = to_numpy(b).reshape(-1, 3)
    if not len(a) or not len(b):
        raise ValueError("Chamfer distance needs two non-empty point sets")
    if method == "auto":
        method = "brute" if max(len(a), len(b)) <= BRUTE_FORCE_LIMIT else "kdtree"
    if method == "brute":
        nearest = _nearest_sq_brute
    elif method == "kdtree":
        nearest = _nearest_sq_kdtree
    else:
        raise ValueError(f"Unknown Chamfer method '{method}'")
    return 0.5 * (float(nearest(a, b).mean()) + float(nearest(b, a).mean()))


def sample_surface_points(mesh: TriangleMesh, n: int, seed: int = 0) -> np.ndarray:
    """Area-weighted uniform samples on the mesh surface, shape (n, 3)."""
    if mesh.is_empty:
        raise ValueError("Cannot sample an empty mesh")
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas()
    face = rng.choice(mesh.n_faces, size=n, p=areas / areas.sum())
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    tris = mesh.triangles()[face]
    return (
        (1 - r1)[:, None] * tris[:, 0]
        + (r1 * (1 - r2))[:, None] * tris[:, 1]
        + (r1 * r2)[:, None] * tris[:, 2]
    )


def save_obj(mesh: TriangleMesh, path: Union[str, Path], use_mapped: bool = False) -> Path:
    """
    Write a Wavefront OBJ.

    With texture coordinates, chart ``c`` occupies u in [c, c + 1).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    positions = mesh.vertices
    if use_mapped:
        if mesh.mapped is None:
            raise ValueError("Mesh has no mapped positions")
        positions = mesh.mapped
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in positions]
    if mesh.uv is not None:
        u_local = np.clip(mesh.uv[:, 0], 0.0, 1.0 - 1e-9)
        for c, u, v in zip(mesh.chart, u_local, mesh.uv[:, 1]):
            lines.append(f"vt {c + u:.17g} {v:.17g}")
        lines += [f"f {a}/{a} {b}/{b} {c}/{c}" for a, b, c in mesh.faces + 1]
    else:
        lines += [f"f {a} {b} {c}" for a, b, c in mesh.faces + 1]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.debug(format_fields(event="obj_saved", path=path, faces=mesh.n_faces))
    return path


def load_obj(path: Union[str, Path]) -> TriangleMesh:
    """Read vertices, texture coordinates and faces (polygons are fanned)."""
    path = Path(path)
    verts, tex, faces, tex_faces = [], [], [], []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                if parts[0] == "v":
                    verts.append([float(x) for x in parts[1:4]])
                elif parts[0] == "vt":
                    tex.append([float(x) for x in parts[1:3]])
                elif parts[0] == "f":
                    refs = [p.split("/") for p in parts[1:]]
                    vi = [int(r[0]) for r in refs]
                    ti = [int(r[1]) if len(r) > 1 and r[1] else 0 for r in refs]
                    for k in range(1, len(vi) - 1):
                        faces.append([vi[0], vi[k], vi[k + 1]])
                        tex_faces.append([ti[0], ti[k], ti[k + 1]])
            except (ValueError, IndexError) as e:
                raise FormatError(f"{path}:{lineno}: malformed OBJ record") from e

    n = len(verts)
    face_arr = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    face_arr = np.where(face_arr < 0, face_arr + n, face_arr - 1)
    try:
        mesh = TriangleMesh(np.asarray(verts).reshape(-1, 3), face_arr)
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e

    tex_arr = np.asarray(tex_faces, dtype=np.int64).reshape(-1, 3)
    if tex and len(tex) == n and np.array_equal(np.where(tex_arr < 0, tex_arr + n, tex_arr - 1), face_arr):
        u = np.asarray(tex)[:, 0]
        chart = np.maximum(np.floor(u), 0).astype(np.int64)
        mesh.uv = np.stack([u - chart, np.asarray(tex)[:, 1]], axis=-1)
        mesh.chart = chart
    return mesh


def _point_triangle_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Unsigned distance from each point to each triangle, shape (P, F)."""
    ab, ac = b - a, c - a
    normal = np.cross(ab, ac)
    norm = np.linalg.norm(normal, axis=-1)
    unit = normal / np.maximum(norm, 1e-300)[:, None]

    ap = p[:, None, :] - a[None]
    d00 = np.einsum("ij,ij->i", ab, ab)
    d01 = np.einsum("ij,ij->i", ab, ac)
    d11 = np.einsum("ij,ij->i", ac, ac)
    d20 = np.einsum("pfj,fj->pf", ap, ab)
    d21 = np.einsum("pfj,fj->pf", ap, ac)
    denom = d00 * d11 - d01 * d01
    safe = np.where(denom > 0, denom, 1.0)
    v = (d11 * d20 - d01 * d21) / safe
    w = (d00 * d21 - d01 * d20) / safe
    inside = (v >= 0) & (w >= 0) & (v + w <= 1) & (denom > 0)
    plane = np.abs(np.einsum("pfj,fj->pf", ap, unit))

    def segment(s0: np.ndarray, s1: np.ndarray) -> np.ndarray:
        d = s1 - s0
        dd = np.maximum(np.einsum("ij,ij->i", d, d), 1e-300)
        rel = p[:, None, :] - s0[None]
        t = np.clip(np.einsum("pfj,fj->pf", rel, d) / dd, 0.0, 1.0)
        closest = rel - t[..., None] * d[None]
        return np.linalg.norm(closest, axis=-1)

    edge = np.minimum(np.minimum(segment(a, b), segment(b, c)), segment(c, a))
    return np.where(inside, np.minimum(plane, edge), edge)


def _winding_number(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Generalized winding number of the triangle soup around each point, shape (P,)."""
    ra, rb, rc = (x[None] - p[:, None, :] for x in (a, b, c))
    la, lb, lc = (np.linalg.norm(x, axis=-1) for x in (ra, rb, rc))
    det = np.einsum("pfj,pfj->pf", ra, np.cross(rb, rc))
    def dot(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.einsum("pfj,pfj->pf", x, y)

    denom = la * lb * lc + dot(ra, rb) * lc + dot(rb, rc) * la + dot(rc, ra) * lb
    return (2.0 * np.arctan2(det, denom)).sum(axis=1) / (4.0 * math.pi)


def normalize_mesh(mesh: TriangleMesh, extent: float = MESH_NORMALIZE_EXTENT) -> TriangleMesh:
    """Center the bounding box at the origin and scale its longest half-side to ``extent``."""
    lo, hi = mesh.bounds()
    half = float((hi - lo).max()) / 2
    if half <= 0:
        raise ValueError("Mesh has zero extent")
    return TriangleMesh((mesh.vertices - (lo + hi) / 2) * (extent / half), mesh.faces.copy())


def mesh_to_grid_sdf(mesh: TriangleMesh, resolution: int = 64, max_pairs: int = 2_000_000) -> GridSdf:
    """
    Brute-force signed distance of a normalized mesh on a grid over [-1, 1]^3.

    Magnitude is the nearest-triangle distance; points with winding number
    above one half are inside (negative).
    """
    if mesh.is_empty:
        raise ValueError("Cannot convert an empty mesh")
    if not 2 <= resolution <= MAX_MESH_GRID_RESOLUTION:
        raise ValueError(f"Mesh grid resolution must be in [2, {MAX_MESH_GRID_RESOLUTION}]")
    mesh = normalize_mesh(mesh)
    tris = mesh.triangles()
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    points = to_numpy(grid_points(resolution))
    chunk = max(1, max_pairs // mesh.n_faces)
    values = np.empty(len(points))
    for start in range(0, len(points), chunk):
        p = points[start : start + chunk]
        dist = _point_triangle_distance(p, a, b, c).min(axis=1)
        inside = np.abs(_winding_number(p, a, b, c)) > 0.5
        values[start : start + chunk] = np.where(inside, -dist, dist)
    logger.info(format_fields(event="mesh_to_grid", resolution=resolution, faces=mesh.n_faces))
    return GridSdf(torch.as_tensor(values.reshape((resolution,) * 3), dtype=DTYPE))
