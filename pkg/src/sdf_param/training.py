"""
Training Module.

Optimization of the parameterization bundle. ``train_parameterization``
runs the joint loss either against analytic target surfaces (geometry mode)
or against multi-view images through the volume renderer (image mode).
``two_phase_train`` adds the coarse-SDF stage and the domain fit in front of
the image-mode run.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
import torch
from torch import nn

from .checkpoint import Checkpoint
from .dataset import MultiViewDataset, pixel_batch
from .deformation import (
    SurfaceSamples,
    cycle_errors,
    loss_code,
    loss_cycle,
    loss_eikonal,
    loss_laplace,
    loss_smooth,
    surface_samples_from_field,
)
from .domain_fit import DomainFitReport, DomainSpec, fit_domain
from .exceptions import ConfigError, DomainFitError, NumericalAbortError
from .model import ParamModel, build_param_model, save_model
from .nn import (
    DTYPE,
    AdamOptimizer,
    Mlp,
    MlpConfig,
    PosEncConfig,
    backward,
    cosine_lr,
    pos_encode,
    spatial_gradient,
)
from .rendering import (
    RenderSettings,
    compute_weights,
    density_from_sdf,
    integrate_ray,
    loss_rgb,
    loss_shading,
    psnr,
    ray_sphere_bounds,
    render_image,
    render_rays,
    sample_depths,
)
from .sdf_fields import MeanSdf, MlpSdf, SdfField
from .utils import epoch_generator, format_fields, read_yaml, write_yaml

logger = logging.getLogger(__name__)

GEOMETRY_TERMS = ("correspondence", "eikonal", "cycle", "smooth", "laplace", "code")
IMAGE_TERMS = ("rgb", "eikonal", "cycle", "smooth", "laplace", "shading", "code")
COARSE_TERMS = ("rgb", "eikonal")
REPORT_FILE = "training_report.yaml"
CHECKPOINT_DIR = "checkpoint"
# cycle/smooth/laplace in image mode only use samples this far into the surface
SURFACE_OPACITY = 0.5
WEIGHT_FLOOR = 1e-5


@dataclass
class LossWeights:
    """Coefficients of the joint loss (the L1 image/correspondence term has weight 1)."""

    eikonal: float = 0.01
    cycle: float = 0.01
    smooth: float = 0.001
    laplace: float = 0.001
    shading: float = 0.01
    code: float = 0.01

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0 or not math.isfinite(value):
                raise ValueError(f"Loss weight '{name}' must be a finite value >= 0")

    def to_dict(self) -> Dict[str, float]:
        return {k: float(v) for k, v in asdict(self).items()}


@dataclass
class CoarseConfig:
    """The throwaway network SDF and radiance head of the first training phase."""

    depth: int = 3
    width: int = 64
    pos_frequencies: int = 4
    view_frequencies: int = 2
    prior_radius: float = 0.5

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class TrainingOptions:
    """Schedule and batch sizes shared by every training phase."""

    epochs: int = 200
    steps_per_epoch: int = 4
    lr: float = 5e-4
    lr_min_factor: float = 0.05
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    surface_batch: int = 512
    surface_pool: int = 2048
    eikonal_batch: int = 512
    laplace_batch: int = 64
    pixel_batch: int = 512
    neighbors: int = 6
    rho: float = 0.02
    checkpoint_every: int = 10
    coarse_epochs: int = 20
    coarse_lr: float = 1e-3
    coarse: CoarseConfig = field(default_factory=CoarseConfig)

    def __post_init__(self):
        if self.epochs < 0 or self.coarse_epochs < 0:
            raise ValueError("Epoch counts must be >= 0")
        if self.steps_per_epoch < 1:
            raise ValueError("steps_per_epoch must be >= 1")
        if min(self.surface_batch, self.eikonal_batch, self.pixel_batch, self.laplace_batch) < 1:
            raise ValueError("Batch sizes must be >= 1")
        if self.neighbors < 3:
            raise ValueError("At least three neighbors are needed for the Laplacian")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class GeometrySupervision:
    """Analytic target surface per object; the correspondence term replaces the image loss."""

    targets: Dict[str, SdfField]
    mode: str = "geometry"


@dataclass
class ImageSupervision:
    """Multi-view images per object, rendered through the composed SDF."""

    datasets: Dict[str, MultiViewDataset]
    settings: RenderSettings = field(default_factory=RenderSettings)
    mode: str = "images"


Supervision = Union[GeometrySupervision, ImageSupervision]


@dataclass
class TrainingReport:
    """Per-epoch loss trace of one run plus the coefficients it ran with."""

    mode: str
    coefficients: Dict[str, float]
    trace: List[Dict[str, float]] = field(default_factory=list)
    phases: Dict[str, Any] = field(default_factory=dict)
    epochs_completed: int = 0
    checkpoint: Optional[str] = None

    def final(self, term: str) -> float:
        if not self.trace:
            raise ValueError("Training report has no epochs")
        return float(self.trace[-1][term])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mode": self.mode,
            "coefficients": dict(self.coefficients),
            "epochs_completed": self.epochs_completed,
            "checkpoint": self.checkpoint,
            "phases": self.phases,
            "trace": self.trace,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainingReport":
        return cls(
            mode=data["mode"],
            coefficients=dict(data.get("coefficients", {})),
            trace=list(data.get("trace", [])),
            phases=dict(data.get("phases", {})),
            epochs_completed=int(data.get("epochs_completed", 0)),
            checkpoint=data.get("checkpoint"),
        )

    def save(self, path: Union[str, Path]) -> Path:
        return write_yaml(self.to_dict(), Path(path))


def _check_finite(total: torch.Tensor, epoch: int, checkpoint: Optional[str]) -> None:
    if not bool(torch.isfinite(total)):
        raise NumericalAbortError(
            f"Non-finite loss at epoch {epoch}; last good checkpoint: {checkpoint or 'none'}",
            checkpoint=checkpoint,
        )


def _band_points(
    surface: torch.Tensor, n: int, gen: torch.Generator, noise: float = 0.05
) -> torch.Tensor:
    """Half uniform in [-1, 1]^3, half jittered around ``surface`` points."""
    n_uniform = n - n // 2
    uniform = torch.rand(n_uniform, 3, generator=gen, dtype=DTYPE) * 2 - 1
    if surface.shape[0] == 0:
        return torch.rand(n, 3, generator=gen, dtype=DTYPE) * 2 - 1
    idx = torch.randint(surface.shape[0], (n // 2,), generator=gen)
    jitter = torch.randn(n // 2, 3, generator=gen, dtype=DTYPE) * noise
    return torch.cat([uniform, surface[idx].detach() + jitter])


def _build_pools(
    targets: Mapping[str, SdfField], options: TrainingOptions
) -> Dict[str, SurfaceSamples]:
    """Target-surface samples per object, drawn once per run."""
    pools = {}
    for i, (oid, target) in enumerate(sorted(targets.items())):
        samples = surface_samples_from_field(target, options.surface_pool, options.seed + 97 * i, oid)
        if len(samples) < 3:
            raise ConfigError(f"Target of '{oid}' has no usable surface inside [-1, 1]^3")
        pools[oid] = samples
    return pools


def _geometry_terms(
    bundle: ParamModel,
    pool: SurfaceSamples,
    options: TrainingOptions,
    gen: torch.Generator,
) -> Dict[str, torch.Tensor]:
    m = bundle.deform
    idx = torch.randint(len(pool), (min(options.surface_batch, len(pool)),), generator=gen)
    batch = pool.subset(idx)
    oid = batch.object_id
    terms = {
        "correspondence": m.composed_sdf(batch.points, oid).abs().mean(),
        "eikonal": loss_eikonal(m, _band_points(batch.points, options.eikonal_batch, gen), oid),
        "cycle": loss_cycle(m, batch),
        "smooth": loss_smooth(m, batch),
    }
    if options.weights.laplace > 0:
        subset = pool.subset(idx[: options.laplace_batch])
        # ring neighbors are projected onto the current composed surface
        seed = int(torch.randint(2**31 - 1, (1,), generator=gen))
        terms["laplace"] = loss_laplace(
            m, subset, rho=options.rho, m_count=options.neighbors, seed=seed
        )
    else:
        terms["laplace"] = torch.zeros((), dtype=DTYPE)
    return terms


def _surface_from_render(out, object_id: str) -> Tuple[SurfaceSamples, SurfaceSamples]:
    """
    Cycle samples (every sample above the weight floor, weighted by its color
    weight) and the most visible sample of each opaque ray.
    """
    samples = out.samples
    flat_w = samples.weights.reshape(-1).detach()
    keep = flat_w > WEIGHT_FLOOR
    cycle = SurfaceSamples(
        samples.positions.reshape(-1, 3)[keep].detach(),
        flat_w[keep],
        out.normals.reshape(-1, 3)[keep].detach(),
        object_id,
    )
    best = samples.weights.detach().argmax(dim=-1)
    rows = torch.arange(best.shape[0])
    opaque = out.opacity.detach() > SURFACE_OPACITY
    near = samples.sdf.detach()[rows, best].abs() < 0.05
    chosen = opaque & near
    points = samples.positions[rows, best][chosen].detach()
    surface = SurfaceSamples(
        points,
        torch.ones(points.shape[0], dtype=DTYPE),
        out.normals[rows, best][chosen].detach(),
        object_id,
    )
    return cycle, surface


def _image_terms(
    bundle: ParamModel,
    oid: str,
    dataset: MultiViewDataset,
    settings: RenderSettings,
    options: TrainingOptions,
    gen: torch.Generator,
    seed: int,
) -> Dict[str, torch.Tensor]:
    m = bundle.deform
    app = bundle.require_appearance()
    per_image = max(1, options.pixel_batch // max(1, len(dataset)))
    origins, dirs, colors = pixel_batch(dataset, per_image, gen)
    out = render_rays(
        m, app, oid, origins, dirs, replace(settings, stratified=True), gen, create_graph=True
    )
    cycle_batch, surf = _surface_from_render(out, oid)
    terms = {
        "rgb": loss_rgb(out.rgb, colors),
        "shading": loss_shading(out.sample_shading.reshape(-1)),
        "eikonal": loss_eikonal(m, _band_points(surf.points, options.eikonal_batch, gen), oid),
    }
    zero = torch.zeros((), dtype=DTYPE)
    if len(cycle_batch) > 0:
        # per-ray sum of weighted round-trip errors, averaged over rays
        terms["cycle"] = loss_cycle(m, cycle_batch) * (len(cycle_batch) / origins.shape[0])
    else:
        terms["cycle"] = zero
    if len(surf) > 0:
        terms["smooth"] = loss_smooth(m, surf)
        if options.weights.laplace > 0:
            lap = surf.subset(torch.arange(len(surf)) < options.laplace_batch)
            terms["laplace"] = loss_laplace(
                m, lap, rho=options.rho, m_count=options.neighbors, seed=seed
            )
        else:
            terms["laplace"] = zero
    else:
        terms["smooth"] = zero
        terms["laplace"] = zero
    return terms


def _weighted_total(terms: Dict[str, torch.Tensor], weights: LossWeights) -> torch.Tensor:
    coeff = {
        "rgb": 1.0,
        "correspondence": 1.0,
        "eikonal": weights.eikonal,
        "cycle": weights.cycle,
        "smooth": weights.smooth,
        "laplace": weights.laplace,
        "shading": weights.shading,
        "code": weights.code,
    }
    return sum(coeff[name] * value for name, value in terms.items())


def _code_term(bundle: ParamModel) -> torch.Tensor:
    shape = [bundle.deform.shape_codes[o] for o in bundle.object_ids]
    appearance = []
    if bundle.appearance is not None:
        appearance = [bundle.appearance.appearance_codes[o] for o in bundle.object_ids]
    return loss_code(shape, appearance)


def train_parameterization(
    bundle: ParamModel,
    supervision: Supervision,
    options: Optional[TrainingOptions] = None,
    output_dir: Optional[Union[str, Path]] = None,
    resume: Optional[Checkpoint] = None,
    on_epoch: Optional[Callable[[Dict[str, float]], None]] = None,
) -> TrainingReport:
    """
    Optimize the deformation (and, with images, appearance) networks with the
    domain frozen.

    Every epoch draws its samples from a generator seeded by (seed, epoch) and
    uses the cosine learning rate of that epoch, so a run resumed from an
    epoch-``e`` checkpoint reproduces epoch ``e`` exactly.

    Args:
        bundle: Model to train in place.
        supervision: Geometry targets or image datasets, keyed by object id.
        options: Schedule, batch sizes and loss coefficients.
        output_dir: Where checkpoints and the report go; nothing is written if None.
        resume: Checkpoint to continue from (optimizer moments and epoch counter).
        on_epoch: Called with each trace entry, after that epoch's checkpoint is written.

    Raises:
        NumericalAbortError: The loss became NaN or infinite.
    """
    options = options or TrainingOptions()
    mode = supervision.mode
    if mode == "geometry":
        by_object = supervision.targets
        terms_order = GEOMETRY_TERMS
    else:
        by_object = supervision.datasets
        terms_order = IMAGE_TERMS
        bundle.require_appearance()
    missing = [oid for oid in bundle.object_ids if oid not in by_object]
    if missing:
        raise ConfigError(f"No {mode} supervision for objects: {', '.join(missing)}")

    out_dir = Path(output_dir) if output_dir is not None else None
    ckpt_dir = out_dir / CHECKPOINT_DIR if out_dir is not None else None
    report = TrainingReport(mode=mode, coefficients=options.weights.to_dict())
    optimizer = AdamOptimizer(bundle.parameters(), lr=options.lr)
    start_epoch = 0
    last_checkpoint: Optional[str] = None
    if resume is not None:
        optimizer.load_state_tensors(resume.tensors)
        start_epoch = int(resume.extra.get("epoch", 0))
        last_checkpoint = str(resume.path)
        previous = resume.path.parent / REPORT_FILE
        if previous.exists():
            report = TrainingReport.from_dict(read_yaml(previous))
            report.trace = [e for e in report.trace if e["epoch"] < start_epoch]
        logger.info(format_fields(event="training_resumed", epoch=start_epoch, mode=mode))

    pools = _build_pools(supervision.targets, options) if mode == "geometry" else {}
    object_ids = sorted(bundle.object_ids)
    n_obj = len(object_ids)

    for epoch in range(start_epoch, options.epochs):
        gen = epoch_generator(options.seed, epoch)
        optimizer.set_lr(cosine_lr(options.lr, epoch, options.epochs, options.lr_min_factor))
        sums = {name: 0.0 for name in terms_order}
        total_sum = 0.0
        for step in range(options.steps_per_epoch):
            optimizer.zero_grad()
            per_object: Dict[str, torch.Tensor] = {}
            for oid in object_ids:
                if mode == "geometry":
                    terms = _geometry_terms(bundle, pools[oid], options, gen)
                else:
                    seed = (options.seed * 1_000_003 + epoch) * 131 + step
                    terms = _image_terms(
                        bundle, oid, by_object[oid], supervision.settings, options, gen, seed
                    )
                for name, value in terms.items():
                    per_object[name] = per_object.get(name, 0.0) + value / n_obj
            per_object["code"] = _code_term(bundle)
            total = _weighted_total(per_object, options.weights)
            _check_finite(total, epoch, last_checkpoint)
            backward(total, optimizer.params)
            optimizer.step()
            for name in terms_order:
                sums[name] += float(per_object[name]) / options.steps_per_epoch
            total_sum += float(total) / options.steps_per_epoch

        entry = {"epoch": epoch, "lr": optimizer.lr, "total": total_sum, **sums}
        report.trace.append(entry)
        report.epochs_completed = epoch + 1
        logger.info(format_fields(event="epoch", mode=mode, **entry))

        done = epoch + 1 == options.epochs
        if ckpt_dir is not None and (done or (epoch + 1) % max(1, options.checkpoint_every) == 0):
            save_model(bundle, ckpt_dir, optimizer, {"epoch": epoch + 1, "mode": mode})
            last_checkpoint = str(ckpt_dir)
            report.checkpoint = last_checkpoint
            report.save(out_dir / REPORT_FILE)
        if on_epoch is not None:
            on_epoch(entry)

    if out_dir is not None and report.checkpoint is None and ckpt_dir is not None:
        save_model(bundle, ckpt_dir, optimizer, {"epoch": report.epochs_completed, "mode": mode})
        report.checkpoint = str(ckpt_dir)
        report.save(out_dir / REPORT_FILE)
    return report


class CoarseModel(nn.Module):
    """
    Network SDF with a sphere prior plus a temporary radiance head, one per
    object. Only the SDF survives the first phase, as the domain-fit target.
    """

    def __init__(self, config: CoarseConfig, seed: int = 0):
        super().__init__()
        self.config = config
        self.pos_enc = PosEncConfig(config.pos_frequencies, include_input=True)
        self.view_enc = PosEncConfig(config.view_frequencies, include_input=True)
        self.network = Mlp(
            MlpConfig(
                config.depth,
                config.width,
                self.pos_enc.output_dim(),
                1,
                "softplus",
                zero_init_last=True,
            ),
            seed=seed,
        )
        head_in = self.pos_enc.output_dim() + 3 + self.view_enc.output_dim()
        self.radiance = Mlp(
            MlpConfig(config.depth, config.width, head_in, 3, "relu", output_transform="sigmoid"),
            seed=seed + 1,
        )

    def field(self) -> MlpSdf:
        return MlpSdf(self.network, self.pos_enc, prior_radius=self.config.prior_radius)

    def render(
        self,
        origins: torch.Tensor,
        dirs: torch.Tensor,
        settings: RenderSettings,
        generator: Optional[torch.Generator] = None,
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        """(rgb, surface-band points) for a batch of rays."""
        near, far, hit = ray_sphere_bounds(origins, dirs, settings.bound_radius)
        t, delta = sample_depths(near, far, settings.n_samples, settings.stratified, generator)
        positions = origins[:, None, :] + t[..., None] * dirs[:, None, :]
        x = positions.reshape(-1, 3).detach().clone().requires_grad_(True)
        sdf = self.field().evaluate(x)
        grad = spatial_gradient(sdf, x, create_graph=True)
        normals = grad / torch.linalg.norm(grad, dim=-1, keepdim=True).clamp_min(1e-12)
        views = dirs[:, None, :].expand_as(positions).reshape(-1, 3)
        features = torch.cat(
            [pos_encode(x, self.pos_enc), normals, pos_encode(views, self.view_enc)], dim=-1
        )
        rgb_samples = self.radiance(features).reshape(*t.shape, 3)
        sigma = density_from_sdf(sdf.reshape(t.shape), settings.density) * hit[:, None].to(DTYPE)
        _, weights = compute_weights(sigma, delta)
        rgb, opacity = integrate_ray(weights, rgb_samples, settings.background)
        best = weights.detach().argmax(dim=-1)
        rows = torch.arange(best.shape[0])
        surface = positions[rows, best][opacity.detach() > SURFACE_OPACITY]
        return rgb, surface


def train_coarse(
    datasets: Mapping[str, MultiViewDataset],
    settings: RenderSettings,
    options: TrainingOptions,
) -> Tuple[Dict[str, CoarseModel], List[Dict[str, float]]]:
    """First phase: a coarse network SDF per object from images, with L_rgb + L_Eik."""
    models = {
        oid: CoarseModel(options.coarse, seed=options.seed + 31 * i)
        for i, oid in enumerate(sorted(datasets))
    }
    params = [p for m in models.values() for p in m.parameters()]
    optimizer = AdamOptimizer(params, lr=options.coarse_lr)
    trace: List[Dict[str, float]] = []
    stratified = replace(settings, stratified=True)
    for epoch in range(options.coarse_epochs):
        gen = epoch_generator(options.seed + 7, epoch)
        optimizer.set_lr(
            cosine_lr(options.coarse_lr, epoch, options.coarse_epochs, options.lr_min_factor)
        )
        sums = {name: 0.0 for name in COARSE_TERMS}
        for _ in range(options.steps_per_epoch):
            optimizer.zero_grad()
            total = torch.zeros((), dtype=DTYPE)
            for oid, model in models.items():
                data = datasets[oid]
                per_image = max(1, options.pixel_batch // max(1, len(data)))
                origins, dirs, colors = pixel_batch(data, per_image, gen)
                rgb, surface = model.render(origins, dirs, stratified, gen)
                l_rgb = loss_rgb(rgb, colors)
                pts = _band_points(surface, options.eikonal_batch, gen).requires_grad_(True)
                g = model.field().gradient(pts, create_graph=True)
                l_eik = ((torch.linalg.norm(g, dim=-1) - 1.0) ** 2).mean()
                total = total + (l_rgb + options.weights.eikonal * l_eik) / len(models)
                sums["rgb"] += float(l_rgb) / (len(models) * options.steps_per_epoch)
                sums["eikonal"] += float(l_eik) / (len(models) * options.steps_per_epoch)
            _check_finite(total, epoch, None)
            backward(total, optimizer.params)
            optimizer.step()
        entry = {"epoch": epoch, **sums}
        trace.append(entry)
        logger.info(format_fields(event="coarse_epoch", **entry))
    for model in models.values():
        model.requires_grad_(False)
    return models, trace


def two_phase_train(
    datasets: Mapping[str, MultiViewDataset],
    domain_spec: DomainSpec,
    options: Optional[TrainingOptions] = None,
    settings: Optional[RenderSettings] = None,
    deform_config=None,
    appearance_config=None,
    output_dir: Optional[Union[str, Path]] = None,
    config: Optional[Dict[str, Any]] = None,
) -> Tuple[ParamModel, TrainingReport]:
    """
    Image-supervised pipeline: coarse SDF, domain fit, then the joint
    parameterization with the domain frozen.

    Several objects share one domain, fitted to the mean of their coarse SDFs.

    Raises:
        ConfigError: An object has fewer than two views.
        DomainFitError: The domain fit did not converge.
    """
    options = options or TrainingOptions()
    settings = settings or RenderSettings()
    for oid, data in datasets.items():
        if len(data) < 2:
            raise ConfigError(f"Object '{oid}' needs at least 2 views, has {len(data)}")

    coarse, coarse_trace = train_coarse(datasets, settings, options)
    fields = [coarse[oid].field() for oid in sorted(coarse)]
    target = fields[0] if len(fields) == 1 else MeanSdf(fields)
    domain, fit_report = fit_domain(target, domain_spec)
    if not fit_report.converged:
        raise DomainFitError(
            f"Domain fit did not converge: final l_sdf={fit_report.final_l_sdf:.4g} "
            f"after {fit_report.iterations_used} iterations"
        )
    if output_dir is not None:
        fit_report.save(Path(output_dir) / "domain_fit.yaml")

    bundle = build_param_model(
        domain,
        sorted(datasets),
        deform_config,
        appearance_config,
        with_appearance=True,
        seed=options.seed,
        config=config,
    )
    report = train_parameterization(
        bundle, ImageSupervision(dict(datasets), settings), options, output_dir
    )
    report.phases = {
        "coarse": coarse_trace,
        "domain_fit": _fit_summary(fit_report),
    }
    if output_dir is not None:
        report.save(Path(output_dir) / REPORT_FILE)
    return bundle, report


def _fit_summary(report: DomainFitReport) -> Dict[str, Any]:
    return {
        "converged": report.converged,
        "iterations": report.iterations_used,
        "final_l_sdf": report.final_l_sdf,
        "domain": report.domain,
    }


def geometry_metrics(
    bundle: ParamModel, targets: Mapping[str, SdfField], n: int = 2000, seed: int = 123
) -> Dict[str, Dict[str, float]]:
    """
    Cycle and correspondence statistics on fresh target-surface samples:
    mean and 99th percentile of |p - inverse_map(forward_map(p))|, and mean
    |composed_sdf| and displacement length.
    """
    out = {}
    for oid, target in sorted(targets.items()):
        samples = surface_samples_from_field(target, n, seed, oid)
        errors = cycle_errors(bundle.deform, samples.points, oid).numpy()
        with torch.no_grad():
            composed = bundle.deform.composed_sdf(samples.points, oid).abs()
            moved = torch.linalg.norm(
                bundle.deform.forward_map(samples.points, oid) - samples.points, dim=-1
            )
        out[oid] = {
            "cycle_mean": float(errors.mean()),
            "cycle_p99": float(np.percentile(errors, 99)),
            "composed_abs_mean": float(composed.mean()),
            "displacement_mean": float(moved.mean()),
            "samples": int(len(samples)),
        }
    return out


def heldout_psnr(
    bundle: ParamModel,
    dataset: MultiViewDataset,
    object_id: str,
    settings: Optional[RenderSettings] = None,
) -> List[float]:
    """PSNR of a full-frame render against every view of ``dataset``."""
    values = []
    for image, camera in zip(dataset.images, dataset.cameras):
        rendered = render_image(bundle, camera, object_id, settings)
        values.append(psnr(rendered.rgb, image))
    return values
