"""
Run Configuration Module.

The YAML run configuration, validated into pydantic models. Unknown keys
are rejected at every level; defaults are the reference loss coefficients
with desk-scale networks and schedules.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .deformation import DeformConfig
from .domain_fit import DomainSpec
from .exceptions import ConfigError
from .rendering import AppearanceConfig, DensityConfig, RenderSettings
from .training import CoarseConfig, LossWeights, TrainingOptions
from .utils import (
    deep_merge,
    format_fields,
    get_config_path,
    get_presets_directory,
    read_yaml,
    substitute_env_vars,
    write_yaml,
)

logger = logging.getLogger(__name__)

PACKAGE_DEFAULTS = Path(__file__).parent.parent.parent / "config" / "default_config.yaml"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LightSection(_Section):
    direction: List[float] = Field(default_factory=lambda: [0.3, 0.5, 1.0])
    intensity: float = 1.0

    @field_validator("direction")
    @classmethod
    def _three(cls, v: List[float]) -> List[float]:
        if len(v) != 3:
            raise ValueError("direction needs three components")
        return v


class ObjectSection(_Section):
    """One object: an analytic shape, a dataset directory, or both."""

    id: str
    shape: Optional[Dict[str, Any]] = None
    dataset: Optional[str] = None
    albedo: Dict[str, Any] = Field(default_factory=lambda: {"type": "constant"})

    @model_validator(mode="after")
    def _has_source(self) -> "ObjectSection":
        if self.shape is None and self.dataset is None:
            raise ValueError(f"object '{self.id}' needs a shape or a dataset")
        return self


class SceneSection(_Section):
    objects: List[ObjectSection] = Field(
        default_factory=lambda: [
            ObjectSection(id="sphere", shape={"type": "sphere", "center": [0, 0, 0], "radius": 0.5})
        ]
    )
    lights: List[LightSection] = Field(default_factory=lambda: [LightSection()])
    ambient: float = Field(0.1, ge=0.0)
    lights_follow_camera: bool = False
    n_views: int = Field(8, ge=2)
    resolution: int = Field(64, ge=4)
    camera_radius: float = Field(3.0, gt=1.2)
    heldout: List[int] = Field(default_factory=list)
    seed: int = 0

    @model_validator(mode="after")
    def _unique_ids(self) -> "SceneSection":
        ids = [o.id for o in self.objects]
        if not ids:
            raise ValueError("scene needs at least one object")
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")
        return self


class DomainSection(_Section):
    kind: Literal["sphere", "polycube"] = "polycube"
    k: int = Field(3, ge=1)
    lambda_s: float = Field(0.01, ge=0.0)
    ks_lambda: float = Field(100.0, gt=0.0)
    max_iters: int = Field(60, ge=1)
    samples_per_iter: int = Field(4096, ge=1)
    lr: float = Field(0.05, gt=0.0)
    seed: int = 0
    file: Optional[str] = None

    def to_spec(self) -> DomainSpec:
        return DomainSpec(
            kind=self.kind,
            k=self.k,
            lambda_s=self.lambda_s,
            ks_lambda=self.ks_lambda,
            max_iters=self.max_iters,
            samples_per_iter=self.samples_per_iter,
            seed=self.seed,
            lr=self.lr,
        )


class WeightsSection(_Section):
    eikonal: float = Field(0.01, ge=0.0)
    cycle: float = Field(0.01, ge=0.0)
    smooth: float = Field(0.001, ge=0.0)
    laplace: float = Field(0.001, ge=0.0)
    shading: float = Field(0.01, ge=0.0)
    code: float = Field(0.01, ge=0.0)


class DeformSection(_Section):
    depth: int = Field(4, ge=1)
    width: int = Field(64, ge=1)
    pos_frequencies: int = Field(6, ge=0)
    code_dim: int = Field(16, ge=1)
    softplus_beta: float = Field(100.0, gt=0.0)


class AppearanceSection(_Section):
    depth: int = Field(3, ge=1)
    width: int = Field(64, ge=1)
    pos_frequencies: int = Field(6, ge=0)
    view_frequencies: int = Field(4, ge=0)
    code_dim: int = Field(16, ge=1)


class CoarseSection(_Section):
    depth: int = Field(3, ge=1)
    width: int = Field(64, ge=1)
    pos_frequencies: int = Field(4, ge=0)
    view_frequencies: int = Field(2, ge=0)
    prior_radius: float = Field(0.5, gt=0.0)


class TrainSection(_Section):
    mode: Literal["geometry", "images"] = "geometry"
    seed: int = 0
    coarse_epochs: int = Field(20, ge=0)
    epochs: int = Field(200, ge=0)
    steps_per_epoch: int = Field(4, ge=1)
    lr: float = Field(5e-4, gt=0.0)
    coarse_lr: float = Field(1e-3, gt=0.0)
    lr_min_factor: float = Field(0.05, gt=0.0, le=1.0)
    pixel_batch: int = Field(512, ge=1)
    surface_batch: int = Field(512, ge=1)
    surface_pool: int = Field(2048, ge=3)
    eikonal_batch: int = Field(512, ge=1)
    laplace_batch: int = Field(64, ge=1)
    neighbors: int = Field(6, ge=3)
    rho: float = Field(0.02, gt=0.0)
    checkpoint_every: int = Field(10, ge=1)
    weights: WeightsSection = Field(default_factory=WeightsSection)
    deform: DeformSection = Field(default_factory=DeformSection)
    appearance: AppearanceSection = Field(default_factory=AppearanceSection)
    coarse: CoarseSection = Field(default_factory=CoarseSection)

    def to_options(self) -> TrainingOptions:
        return TrainingOptions(
            epochs=self.epochs,
            steps_per_epoch=self.steps_per_epoch,
            lr=self.lr,
            lr_min_factor=self.lr_min_factor,
            seed=self.seed,
            weights=LossWeights(**self.weights.model_dump()),
            surface_batch=self.surface_batch,
            surface_pool=self.surface_pool,
            eikonal_batch=self.eikonal_batch,
            laplace_batch=self.laplace_batch,
            pixel_batch=self.pixel_batch,
            neighbors=self.neighbors,
            rho=self.rho,
            checkpoint_every=self.checkpoint_every,
            coarse_epochs=self.coarse_epochs,
            coarse_lr=self.coarse_lr,
            coarse=CoarseConfig(**self.coarse.model_dump()),
        )

    def deform_config(self) -> DeformConfig:
        return DeformConfig(**self.deform.model_dump())

    def appearance_config(self) -> AppearanceConfig:
        return AppearanceConfig(**self.appearance.model_dump())


class RenderSection(_Section):
    resolution: int = Field(64, ge=1)
    n_samples: int = Field(64, ge=2)
    beta: float = Field(0.02, gt=0.0)
    alpha: Optional[float] = Field(None, gt=0.0)
    bound_radius: float = Field(1.2, gt=0.0)
    background: List[float] = Field(default_factory=lambda: [1.0, 1.0, 1.0])
    chunk_rays: int = Field(1024, ge=1)

    @field_validator("background")
    @classmethod
    def _rgb(cls, v: List[float]) -> List[float]:
        if len(v) != 3:
            raise ValueError("background needs three components")
        return v

    def to_settings(self) -> RenderSettings:
        return RenderSettings(
            n_samples=self.n_samples,
            stratified=False,
            bound_radius=self.bound_radius,
            background=tuple(self.background),
            density=DensityConfig(beta=self.beta, alpha=self.alpha),
            chunk_rays=self.chunk_rays,
        )


class OutputSection(_Section):
    directory: str = "runs/default"


class RunConfig(_Section):
    """The full run configuration."""

    scene: SceneSection = Field(default_factory=SceneSection)
    domain: DomainSection = Field(default_factory=DomainSection)
    train: TrainSection = Field(default_factory=TrainSection)
    render: RenderSection = Field(default_factory=RenderSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @property
    def output_dir(self) -> Path:
        return Path(self.output.directory).expanduser()

    def object_ids(self) -> List[str]:
        return [o.id for o in self.scene.objects]

    def object(self, object_id: str) -> ObjectSection:
        for obj in self.scene.objects:
            if obj.id == object_id:
                return obj
        raise ConfigError(f"Unknown object '{object_id}'; configured: {', '.join(self.object_ids())}")

    def dataset_dir(self, object_id: str) -> Path:
        """Dataset directory of an object; generated datasets live under the output directory."""
        obj = self.object(object_id)
        if obj.dataset is not None:
            return Path(obj.dataset).expanduser()
        return self.output_dir / "data" / object_id

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


def parse_run_config(data: Dict[str, Any]) -> RunConfig:
    """Validate a raw mapping, turning pydantic errors into :class:`ConfigError`."""
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration:\n{e}") from e


def load_run_config(
    path: Optional[Union[str, Path]] = None, preset: Optional[str] = None
) -> RunConfig:
    """
    Load a run configuration.

    The packaged defaults are the base; a preset (by name, from
    ``config/presets``) and then the user file are deep-merged over them.
    Without ``path`` the usual search order applies: ``./config.yaml``,
    ``~/.sdf-param/config.yaml``, then the packaged defaults alone.

    Args:
        path: Explicit config file.
        preset: Preset name such as ``desk`` or ``full``.

    Returns:
        The validated configuration.
    """
    data: Dict[str, Any] = read_yaml(PACKAGE_DEFAULTS) if PACKAGE_DEFAULTS.exists() else {}
    if preset is not None:
        preset_path = get_presets_directory() / f"{preset}.yaml"
        if not preset_path.exists():
            raise ConfigError(f"Unknown preset '{preset}'")
        data = deep_merge(data, read_yaml(preset_path))
    if path is None:
        found = get_config_path()
        path = found if found.exists() and found.resolve() != PACKAGE_DEFAULTS.resolve() else None
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        try:
            data = deep_merge(data, read_yaml(path))
        except (ValueError, yaml.YAMLError) as e:
            raise ConfigError(str(e)) from e
    config = parse_run_config(substitute_env_vars(data))
    logger.debug(format_fields(event="config_loaded", path=path or "defaults", preset=preset))
    return config


def dump_run_config(config: RunConfig, path: Union[str, Path]) -> Path:
    """Write ``config`` as YAML; :func:`load_run_config` on the file gives it back unchanged."""
    return write_yaml(config.to_dict(), Path(path))
