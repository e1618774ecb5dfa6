"""
Parameterization Model Module.

The trained bundle: deformation networks with their frozen domain, the
appearance networks, and the run configuration they were trained under.
Also covers checkpoint persistence of the bundle, domain files and the
domain-swap edit.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import torch

from .checkpoint import (
    Checkpoint,
    load_checkpoint,
    load_module_tensors,
    module_tensors,
    save_checkpoint,
)
from .deformation import DeformConfig, DeformModel
from .exceptions import ConfigError, FormatError
from .rendering import AppearanceConfig, AppearanceModel
from .sdf_fields import SdfField, field_from_descriptor
from .utils import format_fields, read_yaml, write_yaml

logger = logging.getLogger(__name__)

DEFORM_PREFIX = "deform."
APPEARANCE_PREFIX = "appearance."
DOMAIN_FILE = "domain.yaml"


@dataclass
class ParamModel:
    """
    Everything needed to map, render and edit a set of objects.

    ``appearance`` is None for geometry-supervised runs, which never train
    the material and shading networks.
    """

    deform: DeformModel
    appearance: Optional[AppearanceModel] = None
    config: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    @property
    def domain(self) -> SdfField:
        return self.deform.domain

    @property
    def object_ids(self) -> List[str]:
        return list(self.deform.object_ids)

    def require_appearance(self) -> AppearanceModel:
        if self.appearance is None:
            raise ConfigError("This model was trained without appearance networks")
        return self.appearance

    def check_object(self, object_id: str) -> str:
        if object_id not in self.deform.shape_codes:
            raise ConfigError(
                f"Unknown object '{object_id}'; model holds {', '.join(self.object_ids)}"
            )
        return object_id

    def parameters(self) -> List[torch.Tensor]:
        """Trainable tensors: both deformation networks, codes, and appearance if present."""
        params = list(self.deform.parameters())
        if self.appearance is not None:
            params += list(self.appearance.parameters())
        return params

    def tensors(self) -> Dict[str, torch.Tensor]:
        out = module_tensors(DEFORM_PREFIX, self.deform)
        if self.appearance is not None:
            out.update(module_tensors(APPEARANCE_PREFIX, self.appearance))
        return out


def build_param_model(
    domain: SdfField,
    object_ids: Sequence[str],
    deform_config: Optional[DeformConfig] = None,
    appearance_config: Optional[AppearanceConfig] = None,
    with_appearance: bool = True,
    seed: int = 0,
    config: Optional[Dict[str, Any]] = None,
) -> ParamModel:
    """Fresh bundle around a fitted domain; both maps start as the identity."""
    if not object_ids:
        raise ValueError("At least one object id is required")
    deform = DeformModel(domain, object_ids, deform_config, seed=seed)
    appearance = (
        AppearanceModel(object_ids, appearance_config, seed=seed + 10)
        if with_appearance
        else None
    )
    return ParamModel(deform, appearance, dict(config or {}), seed)


def swap_domain(bundle: ParamModel, new_domain: SdfField) -> ParamModel:
    """
    Replace the domain SDF of ``bundle`` without touching any network.

    The returned bundle shares every parameter with ``bundle``; rendering or
    meshing it infers the edited surface directly.
    """
    logger.info(format_fields(event="domain_swapped", kind=new_domain.kind))
    return replace(bundle, deform=bundle.deform.with_domain(new_domain))


def save_domain(domain: SdfField, path: Union[str, Path]) -> Path:
    """Write a domain file (the field's YAML descriptor)."""
    return write_yaml({"domain": domain.descriptor()}, Path(path))


def load_domain(path: Union[str, Path]) -> SdfField:
    """Read a domain file written by :func:`save_domain` (or a bare descriptor)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"No domain file at {path}")
    data = read_yaml(path)
    desc = data.get("domain", data)
    if not isinstance(desc, dict) or "type" not in desc:
        raise FormatError(f"{path} does not hold a domain descriptor")
    return field_from_descriptor(desc, path.parent)


def save_model(
    bundle: ParamModel,
    directory: Union[str, Path],
    optimizer=None,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    """
    Checkpoint ``bundle`` (and optionally optimizer moments) into ``directory``.

    The domain descriptor, object ids and network shapes go into the manifest
    so :func:`load_model` can rebuild the bundle without the run config.
    """
    tensors = bundle.tensors()
    if optimizer is not None:
        tensors.update(optimizer.state_tensors())
    meta = {
        "domain": bundle.domain.descriptor(),
        "object_ids": bundle.object_ids,
        "deform_config": bundle.deform.config.to_dict(),
        "appearance_config": (
            bundle.appearance.config.to_dict() if bundle.appearance is not None else None
        ),
    }
    meta.update(extra or {})
    path = save_checkpoint(directory, tensors, bundle.config, bundle.seed, meta)
    save_domain(bundle.domain, Path(directory) / DOMAIN_FILE)
    return path


def load_model(directory: Union[str, Path]) -> "LoadedModel":
    """Rebuild a bundle from a checkpoint directory."""
    ckpt = load_checkpoint(directory)
    extra = ckpt.extra
    try:
        domain = field_from_descriptor(extra["domain"], ckpt.path)
        object_ids = list(extra["object_ids"])
        deform_cfg = DeformConfig(**extra["deform_config"])
        app_desc = extra.get("appearance_config")
    except (KeyError, TypeError) as e:
        raise FormatError(f"Checkpoint {directory} lacks model metadata: {e}") from e
    app_cfg = AppearanceConfig(**app_desc) if app_desc else None
    bundle = build_param_model(
        domain,
        object_ids,
        deform_cfg,
        app_cfg,
        with_appearance=app_cfg is not None,
        seed=ckpt.seed,
        config=ckpt.config,
    )
    load_module_tensors(DEFORM_PREFIX, bundle.deform, ckpt)
    if bundle.appearance is not None:
        load_module_tensors(APPEARANCE_PREFIX, bundle.appearance, ckpt)
    logger.debug(format_fields(event="model_loaded", path=ckpt.path, objects=len(object_ids)))
    return LoadedModel(bundle, ckpt)


@dataclass
class LoadedModel:
    """A rebuilt bundle plus the checkpoint it came from (for optimizer state and epoch)."""

    bundle: ParamModel
    checkpoint: Checkpoint

    @property
    def epoch(self) -> int:
        return int(self.checkpoint.extra.get("epoch", 0))
