"""
Utility Functions Module.

Config file discovery, YAML helpers, logging setup and seeding used across
sdf-param.
"""

import hashlib
import logging
import os
import re
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import numpy as np
import torch
import yaml
from rich.console import Console
from rich.logging import RichHandler

console = Console()

_LOGGING_CONFIGURED = False


def get_config_path() -> Path:
    """Get the configuration file path."""
    # Check for config in current directory
    local_config = Path("config.yaml")
    if local_config.exists():
        return local_config

    # Check for config in user's home directory
    home_config = Path.home() / ".sdf-param" / "config.yaml"
    if home_config.exists():
        return home_config

    # Check for config in package directory
    package_config = Path(__file__).parent.parent.parent / "config" / "default_config.yaml"
    if package_config.exists():
        return package_config

    return local_config


def get_presets_directory() -> Path:
    """Directory holding the shipped ``desk`` and ``full`` presets."""
    return Path(__file__).parent.parent.parent / "config" / "presets"


def read_yaml(path: Path) -> Dict[str, Any]:
    """
    Read a YAML mapping from disk.

    Args:
        path: File to read.

    Returns:
        The parsed mapping (empty dict for an empty file).
    """
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path} does not contain a YAML mapping")
    return data


def write_yaml(data: Dict[str, Any], path: Path) -> Path:
    """Write a mapping as block-style YAML, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(data, f, default_flow_style=False, sort_keys=False)
    return path


def deep_merge(base: Dict, override: Dict) -> Dict:
    """
    Deep merge two dictionaries.

    Args:
        base: Base dictionary.
        override: Dictionary with values to override.

    Returns:
        Merged dictionary.
    """
    result = base.copy()

    for key, value in override.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = deep_merge(result[key], value)
        else:
            result[key] = value

    return result


_ENV_PATTERN = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def _substitute_value(value: Any) -> Any:
    if isinstance(value, dict):
        return substitute_env_vars(value)
    if isinstance(value, list):
        return [_substitute_value(v) for v in value]
    if isinstance(value, str):
        return _ENV_PATTERN.sub(lambda m: os.environ.get(m.group(1), ""), value)
    return value


def substitute_env_vars(config: Dict) -> Dict:
    """
    Substitute environment variables in config values.

    Supports ${VAR_NAME} syntax anywhere inside a string, in nested sections
    and in list items. Unset variables become empty strings.

    Args:
        config: Configuration dictionary.

    Returns:
        Configuration with substituted values.
    """
    return {key: _substitute_value(value) for key, value in config.items()}


def setup_logging(verbose: bool = False) -> None:
    """Route all ``sdf_param`` loggers through a Rich handler."""
    global _LOGGING_CONFIGURED
    logger = logging.getLogger("sdf_param")
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    if not _LOGGING_CONFIGURED:
        handler = RichHandler(console=console, show_path=False, markup=False)
        handler.setFormatter(logging.Formatter("%(name)s %(message)s"))
        logger.addHandler(handler)
        logger.propagate = False
        _LOGGING_CONFIGURED = True


def format_fields(**fields: Any) -> str:
    """
    Render keyword fields as ``key=value`` pairs for line-oriented logs.

    Floats are written with ``repr`` precision so loss traces can be parsed back.
    """
    parts = []
    for key, value in fields.items():
        if isinstance(value, float):
            parts.append(f"{key}={value!r}")
        else:
            parts.append(f"{key}={value}")
    return " ".join(parts)


def make_generator(seed: int) -> torch.Generator:
    """A CPU torch generator seeded with ``seed``."""
    generator = torch.Generator()
    generator.manual_seed(int(seed))
    return generator


def epoch_generator(seed: int, epoch: int) -> torch.Generator:
    """Per-epoch generator; a resumed run draws the same samples as an unbroken one."""
    return make_generator(int(seed) * 1_000_003 + int(epoch))


def set_threads(threads: Optional[int]) -> None:
    """Set the torch intra-op thread count (``None`` keeps the library default)."""
    if threads is not None and threads > 0:
        torch.set_num_threads(threads)


def sha256_file(path: Path) -> str:
    """Hex SHA-256 digest of a file."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def write_checksums(directory: Path, files: Iterable[Path], name: str = "checksums.sha256") -> Path:
    """Write ``<digest>  <relative path>`` lines for ``files``."""
    directory = Path(directory)
    lines = []
    for path in sorted(Path(p) for p in files):
        rel = path.relative_to(directory).as_posix()
        lines.append(f"{sha256_file(path)}  {rel}")
    out = directory / name
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out


def verify_checksums(directory: Path, name: str = "checksums.sha256") -> bool:
    """Check every entry of a checksum file; ``False`` on any mismatch or missing file."""
    directory = Path(directory)
    for line in (directory / name).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        digest, rel = line.split("  ", 1)
        target = directory / rel
        if not target.exists() or sha256_file(target) != digest:
            return False
    return True


def to_numpy(values: Any) -> np.ndarray:
    """Detach a tensor (or pass an array through) as a float64 numpy array."""
    if isinstance(values, torch.Tensor):
        return values.detach().cpu().numpy().astype(np.float64)
    return np.asarray(values, dtype=np.float64)
