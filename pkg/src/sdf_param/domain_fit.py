"""
Domain Fitting Module.

Fits the parametric domain (a sphere or a k-box polycube) to a coarse target
SDF by running Adam directly on the sphere / box parameters against

    L_param = mean |F(p) - G(p)| + lambda_s * mean |Laplacian F(p)|

where the Laplacian is taken by second-order central differences.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import torch

from .exceptions import DomainFitError
from .nn import DTYPE, AdamOptimizer, cosine_lr
from .sdf_fields import PolycubeSdf, SdfField, SphereSdf
from .utils import format_fields, make_generator, write_yaml

logger = logging.getLogger(__name__)

DOMAIN_KINDS = ("sphere", "polycube")
LAPLACIAN_STEP = 1e-3
MAX_INIT_ATTEMPTS = 100_000
STALL_WINDOW = 5
STALL_TOL = 1e-4


@dataclass
class DomainSpec:
    """What to fit and how."""

    kind: str = "polycube"
    k: int = 3
    lambda_s: float = 0.01
    ks_lambda: float = 100.0
    max_iters: int = 60
    samples_per_iter: int = 4096
    seed: int = 0
    lr: float = 0.05
    min_half_extent: float = 0.02
    init_half_extent: float = 0.15

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise ValueError(f"Domain kind must be one of {DOMAIN_KINDS}, got '{self.kind}'")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.lambda_s < 0:
            raise ValueError("lambda_s must be >= 0")
        if self.ks_lambda <= 0:
            raise ValueError("ks_lambda must be > 0")
        if self.max_iters < 1 or self.samples_per_iter < 1:
            raise ValueError("max_iters and samples_per_iter must be >= 1")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class DomainFitReport:
    """
    Per-iteration loss trace and the fitted parameters.

    ``final_l_sdf`` and ``best_iteration`` describe the returned domain: its
    SDF mismatch on the fixed evaluation points and the number of Adam
    updates that produced it.
    """

    trace: List[Dict[str, float]] = field(default_factory=list)
    domain: Dict[str, Any] = field(default_factory=dict)
    converged: bool = False
    iterations_used: int = 0
    final_l_sdf: float = math.inf
    best_iteration: int = -1
    spec: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def save(self, path: Union[str, Path]) -> Path:
        return write_yaml(self.to_dict(), Path(path))


class LearnableSphere(SdfField):
    """Sphere whose center and radius are optimizable tensors."""

    kind = "sphere"

    def __init__(self, center: torch.Tensor, radius: torch.Tensor):
        self.center = center
        self.radius = radius

    def evaluate(self, points: torch.Tensor) -> torch.Tensor:
        return torch.linalg.norm(points - self.center, dim=-1) - self.radius

    def frozen(self) -> SphereSdf:
        return SphereSdf(self.center.detach().tolist(), float(self.radius.detach()))


def sample_fit_points(target: SdfField, n: int, seed: int) -> torch.Tensor:
    """
    Mixture of fit points for the domain loss.

    Half are uniform in [-1, 1]^3. The other half are uniform points moved by
    one Newton step toward the target's zero level set, then jittered with
    N(0, 0.03^2) so they cover a thin band around the surface.

    Returns:
        Tensor of shape (n, 3); deterministic given ``seed``.
    """
    if n <= 0:
        return torch.zeros(0, 3, dtype=DTYPE)
    gen = make_generator(seed)
    n_near = n // 2
    uniform = torch.rand(n - n_near, 3, generator=gen, dtype=DTYPE) * 2 - 1
    if n_near == 0:
        return uniform
    start = torch.rand(n_near, 3, generator=gen, dtype=DTYPE) * 2 - 1
    with torch.no_grad():
        s = target.evaluate(start)
    g = target.gradient(start)
    g2 = (g * g).sum(dim=-1, keepdim=True).clamp_min(1e-12)
    near = start - s[:, None] * g / g2
    near = near + 0.03 * torch.randn(n_near, 3, generator=gen, dtype=DTYPE)
    return torch.cat([uniform, near.clamp(-1.0, 1.0)])


def sdf_laplacian(field: SdfField, points: torch.Tensor, h: float = LAPLACIAN_STEP) -> torch.Tensor:
    """Second-order central-difference Laplacian, differentiable in the field parameters."""
    center = field.evaluate(points)
    lap = torch.zeros_like(center)
    for axis in range(3):
        e = torch.zeros(3, dtype=DTYPE)
        e[axis] = h
        lap = lap + field.evaluate(points + e) + field.evaluate(points - e) - 2 * center
    return lap / (h * h)


def loss_param(
    domain: SdfField, target: SdfField, points: torch.Tensor, lambda_s: float
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    Domain fitting loss.

    Returns:
        (total, l_sdf, l_lapsdf) as scalar tensors carrying gradients to the
        domain parameters.
    """
    if points.shape[0] == 0:
        raise ValueError("loss_param needs at least one point")
    with torch.no_grad():
        target_values = target.evaluate(points)
    l_sdf = (domain.evaluate(points) - target_values).abs().mean()
    if lambda_s > 0:
        l_lap = sdf_laplacian(domain, points).abs().mean()
    else:
        l_lap = torch.zeros((), dtype=DTYPE)
    return l_sdf + lambda_s * l_lap, l_sdf, l_lap


def _interior_pool(target: SdfField, size: int, gen: torch.Generator) -> torch.Tensor:
    found = []
    count = 0
    attempts = 0
    while count < size and attempts < MAX_INIT_ATTEMPTS:
        batch = min(4096, MAX_INIT_ATTEMPTS - attempts)
        pts = torch.rand(batch, 3, generator=gen, dtype=DTYPE) * 2 - 1
        attempts += batch
        with torch.no_grad():
            inside = pts[target.evaluate(pts) < 0]
        found.append(inside)
        count += inside.shape[0]
    pool = torch.cat(found) if found else torch.zeros(0, 3, dtype=DTYPE)
    return pool[:size]


def init_boxes(
    target: SdfField,
    k: int,
    seed: int,
    half_extent: float = 0.15,
    ks_lambda: float = 100.0,
    pool_size: int = 512,
) -> PolycubeSdf:
    """
    Place ``k`` boxes of half-extent ``half_extent`` inside the target.

    Candidate centers are drawn by rejection sampling on ``s < 0``; the first
    center is a random candidate and the rest are picked farthest-first so
    the boxes start spread over the interior.

    Raises:
        DomainFitError: fewer than ``k`` interior points within 10^5 attempts.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    gen = make_generator(seed)
    pool = _interior_pool(target, max(pool_size, k), gen)
    if pool.shape[0] < k:
        raise DomainFitError(
            f"Found {pool.shape[0]} interior points in {MAX_INIT_ATTEMPTS} attempts; "
            f"need {k} to place the boxes"
        )
    first = int(torch.randint(pool.shape[0], (1,), generator=gen))
    chosen = [first]
    dist = torch.linalg.norm(pool - pool[first], dim=-1)
    for _ in range(1, k):
        nxt = int(dist.argmax())
        chosen.append(nxt)
        dist = torch.minimum(dist, torch.linalg.norm(pool - pool[nxt], dim=-1))
    centers = pool[chosen].clone()
    half = torch.full((k, 3), float(half_extent), dtype=DTYPE)
    return PolycubeSdf(centers, half, ks_lambda=ks_lambda, smooth=True)


def init_sphere(target: SdfField, seed: int, pool_size: int = 32768) -> LearnableSphere:
    """Sphere at the interior centroid with the volume-matched radius."""
    gen = make_generator(seed)
    pts = torch.rand(pool_size, 3, generator=gen, dtype=DTYPE) * 2 - 1
    with torch.no_grad():
        inside = pts[target.evaluate(pts) < 0]
    if inside.shape[0] == 0:
        raise DomainFitError("Target has no interior in [-1, 1]^3")
    volume = 8.0 * inside.shape[0] / pool_size
    radius = (3.0 * volume / (4.0 * math.pi)) ** (1.0 / 3.0)
    return LearnableSphere(inside.mean(dim=0), torch.tensor(radius, dtype=DTYPE))


def _stalled(scores: List[float]) -> bool:
    if len(scores) < 2 * STALL_WINDOW:
        return False
    before = min(scores[:-STALL_WINDOW])
    recent = min(scores[-STALL_WINDOW:])
    return before - recent < STALL_TOL * abs(before)


def _eval_l_sdf(domain: SdfField, points: torch.Tensor, target_values: torch.Tensor) -> float:
    with torch.no_grad():
        return (domain.evaluate(points) - target_values).abs().mean().item()


def fit_domain(target: SdfField, spec: DomainSpec) -> Tuple[SdfField, DomainFitReport]:
    """
    Fit a sphere or polycube domain to ``target``.

    Half-extents (or the radius) are clamped to ``spec.min_half_extent`` after
    every step. Candidates are scored by L_sdf on one fixed seeded point set,
    before each update and once after the last; the best-scoring parameters
    are returned and early stopping watches the same score. A run whose boxes
    all collapse onto the clamp while that score stays above 0.5 is reported
    with ``converged=False``.

    Returns:
        The frozen fitted field and the fit report.
    """
    if spec.kind == "sphere":
        learnable = init_sphere(target, spec.seed)
        tensors = [learnable.center, learnable.radius]
    else:
        learnable = init_boxes(
            target, spec.k, spec.seed, spec.init_half_extent, spec.ks_lambda
        )
        tensors = [learnable.centers, learnable.half_extents]
    for t in tensors:
        t.requires_grad_(True)
    opt = AdamOptimizer(tensors, lr=spec.lr)
    report = DomainFitReport(spec=spec.to_dict())

    # never drawn by the per-iteration samples, which use seed + it
    eval_points = sample_fit_points(target, spec.samples_per_iter, spec.seed + spec.max_iters)
    with torch.no_grad():
        eval_values = target.evaluate(eval_points)
    scores: List[float] = []
    best = (math.inf, 0, [t.detach().clone() for t in tensors])
    stopped_early = False

    for it in range(spec.max_iters):
        score = _eval_l_sdf(learnable, eval_points, eval_values)
        scores.append(score)
        if score < best[0]:
            best = (score, it, [t.detach().clone() for t in tensors])
        if _stalled(scores):
            stopped_early = True
            break
        opt.set_lr(cosine_lr(spec.lr, it, spec.max_iters))
        points = sample_fit_points(target, spec.samples_per_iter, spec.seed + it)
        opt.zero_grad()
        total, l_sdf, l_lap = loss_param(learnable, target, points, spec.lambda_s)
        total.backward()
        opt.step()
        with torch.no_grad():
            tensors[1].clamp_(min=spec.min_half_extent)
        entry = {
            "iteration": it,
            "l_sdf": l_sdf.detach().item(),
            "l_lapsdf": l_lap.detach().item(),
            "total": total.detach().item(),
            "eval_l_sdf": score,
        }
        report.trace.append(entry)
        logger.debug(format_fields(event="domain_fit", **entry))

    if not stopped_early:
        score = _eval_l_sdf(learnable, eval_points, eval_values)
        if score < best[0]:
            best = (score, len(report.trace), [t.detach().clone() for t in tensors])

    for t, saved in zip(tensors, best[2]):
        t.requires_grad_(False)
        t.copy_(saved)
    if spec.kind == "sphere":
        fitted: SdfField = learnable.frozen()
    else:
        fitted = PolycubeSdf.from_params(learnable.params())
    collapsed = bool((tensors[1] <= spec.min_half_extent + 1e-12).all())
    report.iterations_used = len(report.trace)
    report.best_iteration = best[1]
    report.final_l_sdf = _eval_l_sdf(fitted, eval_points, eval_values)
    report.converged = not (collapsed and report.final_l_sdf > 0.5)
    report.domain = fitted.descriptor()
    logger.info(
        format_fields(
            event="domain_fitted",
            kind=spec.kind,
            iterations=report.iterations_used,
            best_iteration=report.best_iteration,
            l_sdf=report.final_l_sdf,
            converged=report.converged,
        )
    )
    return fitted, report
