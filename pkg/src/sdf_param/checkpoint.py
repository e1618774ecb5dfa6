"""
Checkpoint Module.

A checkpoint is a directory holding ``params.bin`` (every tensor as
little-endian float64, concatenated in manifest order) and ``manifest.yaml``
(tensor names, shapes and byte offsets, plus the run config, seed and any
extra metadata such as the fitted domain and the epoch counter).
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import torch

from .exceptions import FormatError
from .nn import DTYPE
from .utils import format_fields, read_yaml, write_yaml

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
BLOB_NAME = "params.bin"
MANIFEST_NAME = "manifest.yaml"


@dataclass
class Checkpoint:
    """Tensors and metadata read back from disk."""

    tensors: Dict[str, torch.Tensor]
    config: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    extra: Dict[str, Any] = field(default_factory=dict)
    path: Path = Path(".")

    def require(self, name: str) -> torch.Tensor:
        """Fetch a tensor or raise :class:`FormatError` naming the missing entry."""
        if name not in self.tensors:
            raise FormatError(f"Checkpoint {self.path} is missing tensor '{name}'")
        return self.tensors[name]

    def subset(self, prefix: str) -> Dict[str, torch.Tensor]:
        """Tensors whose names start with ``prefix``, with the prefix stripped."""
        return {k[len(prefix) :]: v for k, v in self.tensors.items() if k.startswith(prefix)}


def save_checkpoint(
    directory: Union[str, Path],
    tensors: Dict[str, torch.Tensor],
    config: Dict[str, Any],
    seed: int,
    extra: Dict[str, Any] = None,
) -> Path:
    """
    Write a checkpoint directory.

    Args:
        directory: Target directory, created if needed.
        tensors: Named tensors in the order they should appear in the blob.
        config: Run configuration to embed.
        seed: Run seed.
        extra: Additional YAML-serializable metadata.

    Returns:
        Path of the written manifest.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    with open(directory / BLOB_NAME, "wb") as blob:
        for name, tensor in tensors.items():
            data = tensor.detach().cpu().to(DTYPE).numpy().astype("<f8")
            if not np.isfinite(data).all():
                raise FormatError(f"Refusing to checkpoint non-finite tensor '{name}'")
            blob.write(data.tobytes(order="C"))
            entries.append({"name": name, "shape": list(data.shape), "offset": offset})
            offset += data.size * 8
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "seed": int(seed),
        "blob": BLOB_NAME,
        "blob_bytes": offset,
        "tensors": entries,
        "config": config,
        "extra": extra or {},
    }
    path = write_yaml(manifest, directory / MANIFEST_NAME)
    logger.debug(format_fields(event="checkpoint_saved", path=directory, tensors=len(entries)))
    return path


def load_checkpoint(directory: Union[str, Path]) -> Checkpoint:
    """Read a checkpoint directory written by :func:`save_checkpoint`."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.exists():
        raise FileNotFoundError(f"No checkpoint manifest at {manifest_path}")
    manifest = read_yaml(manifest_path)
    version = manifest.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise FormatError(f"Unsupported checkpoint format version {version}")
    blob = (directory / manifest.get("blob", BLOB_NAME)).read_bytes()
    if len(blob) != manifest.get("blob_bytes", len(blob)):
        raise FormatError(f"Checkpoint blob in {directory} is truncated")
    tensors = {}
    for entry in manifest.get("tensors", []):
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = int(entry["offset"])
        if start + 8 * count > len(blob):
            raise FormatError(f"Tensor '{entry['name']}' runs past the end of the blob")
        values = np.frombuffer(blob, dtype="<f8", count=count, offset=start).reshape(shape)
        tensors[entry["name"]] = torch.from_numpy(values.astype(np.float64))
    return Checkpoint(
        tensors=tensors,
        config=manifest.get("config", {}),
        seed=int(manifest.get("seed", 0)),
        extra=manifest.get("extra", {}),
        path=directory,
    )


def module_tensors(prefix: str, module: torch.nn.Module) -> Dict[str, torch.Tensor]:
    """``state_dict`` entries of ``module`` keyed ``prefix + name``."""
    return {prefix + k: v for k, v in module.state_dict().items()}


def load_module_tensors(prefix: str, module: torch.nn.Module, checkpoint: Checkpoint) -> None:
    """Copy ``prefix``-named tensors into ``module``; every parameter must be present."""
    state = {}
    for name in module.state_dict():
        state[name] = checkpoint.require(prefix + name)
    module.load_state_dict(state)
