"""
Tests for Checkpoint Module.
"""

import pytest
import torch

import sys
sys.path.insert(0, 'src')

from sdf_param.checkpoint import (
    MANIFEST_NAME,
    load_checkpoint,
    load_module_tensors,
    module_tensors,
    save_checkpoint,
)
from sdf_param.exceptions import FormatError
from sdf_param.nn import DTYPE, Mlp, MlpConfig
from sdf_param.utils import read_yaml, write_yaml


@pytest.fixture
def tensors():
    """A few named tensors of different shapes."""
    return {
        "a": torch.arange(6, dtype=DTYPE).reshape(2, 3),
        "b": torch.tensor([0.1, -0.2], dtype=DTYPE),
        "c": torch.tensor(3.5, dtype=DTYPE),
    }


class TestSaveLoad:
    """Tests for the blob + manifest layout."""

    def test_round_trip(self, tmp_path, tensors):
        """Test that tensors, config and seed survive a round trip."""
        save_checkpoint(tmp_path, tensors, {"train": {"lr": 5e-4}}, seed=7, extra={"epoch": 3})
        ckpt = load_checkpoint(tmp_path)
        for name, value in tensors.items():
            assert torch.equal(ckpt.tensors[name], value)
        assert ckpt.config == {"train": {"lr": 5e-4}}
        assert ckpt.seed == 7
        assert ckpt.extra["epoch"] == 3

    def test_manifest_offsets(self, tmp_path, tensors):
        """Test that offsets follow declaration order."""
        save_checkpoint(tmp_path, tensors, {}, seed=0)
        manifest = read_yaml(tmp_path / MANIFEST_NAME)
        offsets = [entry["offset"] for entry in manifest["tensors"]]
        assert offsets == [0, 48, 64]
        assert manifest["blob_bytes"] == 72

    def test_missing_tensor(self, tmp_path, tensors):
        """Test that require names the missing tensor."""
        save_checkpoint(tmp_path, tensors, {}, seed=0)
        with pytest.raises(FormatError, match="missing"):
            load_checkpoint(tmp_path).require("deform.f_def.out.weight")

    def test_version_mismatch(self, tmp_path, tensors):
        """Test that an unknown format version is rejected."""
        save_checkpoint(tmp_path, tensors, {}, seed=0)
        manifest = read_yaml(tmp_path / MANIFEST_NAME)
        manifest["format_version"] = 99
        write_yaml(manifest, tmp_path / MANIFEST_NAME)
        with pytest.raises(FormatError):
            load_checkpoint(tmp_path)

    def test_truncated_blob(self, tmp_path, tensors):
        """Test that a short blob is rejected."""
        save_checkpoint(tmp_path, tensors, {}, seed=0)
        blob = tmp_path / "params.bin"
        blob.write_bytes(blob.read_bytes()[:-8])
        with pytest.raises(FormatError):
            load_checkpoint(tmp_path)

    def test_non_finite_refused(self, tmp_path):
        """Test that NaN tensors are never written."""
        with pytest.raises(FormatError):
            save_checkpoint(tmp_path, {"x": torch.tensor([float("nan")], dtype=DTYPE)}, {}, 0)

    def test_missing_directory(self, tmp_path):
        """Test loading from an empty directory."""
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "nothing")


class TestModuleTensors:
    """Tests for module state helpers."""

    def test_module_round_trip(self, tmp_path):
        """Test restoring an MLP's weights into a differently seeded twin."""
        cfg = MlpConfig(depth=2, width=8, input_dim=3, output_dim=1)
        source = Mlp(cfg, seed=1)
        save_checkpoint(tmp_path, module_tensors("net.", source), {}, seed=1)
        target = Mlp(cfg, seed=2)
        load_module_tensors("net.", target, load_checkpoint(tmp_path))
        x = torch.randn(4, 3, dtype=DTYPE)
        assert torch.equal(source(x), target(x))
