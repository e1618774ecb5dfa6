"""
Network Substrate Module.

Positional encoding, MLPs, per-object latent codes and the Adam optimizer,
all on CPU float64 torch tensors. Reverse-mode differentiation comes from
``torch.autograd``; this module adds the conventions the rest of the
package relies on (zero-filled gradients, finite-gradient gating, cosine
learning-rate decay).
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import torch
from torch import nn

from .utils import format_fields, make_generator

logger = logging.getLogger(__name__)

DTYPE = torch.float64

ACTIVATIONS = ("softplus", "relu")
OUTPUT_TRANSFORMS = ("none", "sigmoid", "tanh")


@dataclass
class PosEncConfig:
    """Frequency positional encoding settings."""

    num_frequencies: int = 6
    include_input: bool = True

    def __post_init__(self):
        if self.num_frequencies < 0:
            raise ValueError("num_frequencies must be >= 0")

    def output_dim(self, input_dim: int = 3) -> int:
        """Width of the encoded vector for ``input_dim`` inputs."""
        return input_dim * (int(self.include_input) + 2 * self.num_frequencies)


def pos_encode(points: torch.Tensor, cfg: PosEncConfig) -> torch.Tensor:
    """
    Encode ``points`` as ``[p, sin(2^0 pi p), cos(2^0 pi p), ..., sin(2^(L-1) pi p), cos(...)]``.

    Args:
        points: Tensor of shape (..., D).
        cfg: Encoding settings.

    Returns:
        Tensor of shape (..., D * (include_input + 2L)).
    """
    parts = [points] if cfg.include_input else []
    if cfg.num_frequencies > 0:
        freqs = math.pi * 2.0 ** torch.arange(
            cfg.num_frequencies, dtype=points.dtype, device=points.device
        )
        scaled = points[..., None, :] * freqs[:, None]
        enc = torch.stack([torch.sin(scaled), torch.cos(scaled)], dim=-2)
        parts.append(enc.reshape(*points.shape[:-1], -1))
    if not parts:
        return points.new_zeros(*points.shape[:-1], 0)
    return torch.cat(parts, dim=-1)


@dataclass
class MlpConfig:
    """
    Shape of a fully connected network.

    ``depth`` counts hidden layers; the network has ``depth + 1`` linear layers.
    Hidden layer ``i`` listed in ``skip_layers`` receives the network input
    concatenated to its own input.
    """

    depth: int = 4
    width: int = 64
    input_dim: int = 3
    output_dim: int = 3
    activation: str = "relu"
    skip_layers: List[int] = field(default_factory=list)
    output_transform: str = "none"
    softplus_beta: float = 100.0
    zero_init_last: bool = False

    def __post_init__(self):
        if self.depth < 1 or self.width < 1:
            raise ValueError("MLP depth and width must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"Unknown activation '{self.activation}'")
        if self.output_transform not in OUTPUT_TRANSFORMS:
            raise ValueError(f"Unknown output transform '{self.output_transform}'")

    def to_dict(self) -> Dict:
        """Convert to dictionary."""
        return asdict(self)


class Mlp(nn.Module):
    """Fully connected network with optional input skips and output squashing."""

    def __init__(self, config: MlpConfig, seed: int = 0):
        super().__init__()
        self.config = config
        generator = make_generator(seed)
        layers = []
        for i in range(config.depth):
            in_dim = config.input_dim if i == 0 else config.width
            if i > 0 and i in config.skip_layers:
                in_dim += config.input_dim
            layers.append(self._make_linear(in_dim, config.width, generator))
        self.hidden = nn.ModuleList(layers)
        self.out = self._make_linear(config.width, config.output_dim, generator)
        if config.zero_init_last:
            with torch.no_grad():
                self.out.weight.zero_()
                self.out.bias.zero_()
        if config.activation == "softplus":
            self.act = nn.Softplus(beta=config.softplus_beta)
        else:
            self.act = nn.ReLU()

    @staticmethod
    def _make_linear(fan_in: int, fan_out: int, generator: torch.Generator) -> nn.Linear:
        layer = nn.Linear(fan_in, fan_out, dtype=DTYPE)
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        with torch.no_grad():
            layer.weight.copy_(
                (torch.rand(fan_out, fan_in, generator=generator, dtype=DTYPE) * 2 - 1) * bound
            )
            layer.bias.zero_()
        return layer

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.config.input_dim:
            raise ValueError(
                f"MLP expects input dimension {self.config.input_dim}, got {x.shape[-1]}"
            )
        h = x
        for i, layer in enumerate(self.hidden):
            if i > 0 and i in self.config.skip_layers:
                h = torch.cat([h, x], dim=-1)
            h = self.act(layer(h))
        y = self.out(h)
        if self.config.output_transform == "sigmoid":
            return torch.sigmoid(y)
        if self.config.output_transform == "tanh":
            return torch.tanh(y)
        return y


def mlp_forward(net: Mlp, inputs) -> torch.Tensor:
    """Deterministic forward pass; records the autograd tape when grad mode is on."""
    x = torch.as_tensor(inputs, dtype=DTYPE)
    return net(x)


def _code_key(object_id: str) -> str:
    return str(object_id).replace(".", "_")


class LatentCodes(nn.Module):
    """Per-object latent vectors, initialized from N(0, 0.01^2)."""

    def __init__(self, object_ids: Sequence[str], dim: int, seed: int = 0, std: float = 0.01):
        super().__init__()
        self.dim = dim
        self.object_ids = [str(o) for o in object_ids]
        generator = make_generator(seed)
        self.codes = nn.ParameterDict(
            {
                _code_key(obj): nn.Parameter(
                    torch.randn(dim, generator=generator, dtype=DTYPE) * std
                )
                for obj in self.object_ids
            }
        )

    def __getitem__(self, object_id: str) -> torch.Tensor:
        key = _code_key(object_id)
        if key not in self.codes:
            raise KeyError(f"No latent code for object '{object_id}'")
        return self.codes[key]

    def __contains__(self, object_id: str) -> bool:
        return _code_key(object_id) in self.codes


def expand_code(code: Optional[torch.Tensor], n: int) -> Optional[torch.Tensor]:
    """Broadcast a (d,) latent code to (n, d)."""
    if code is None:
        return None
    return code.reshape(1, -1).expand(n, -1)


def safe_norm(v: torch.Tensor, dim: int = -1, eps: float = 1e-12) -> torch.Tensor:
    """Euclidean norm whose gradient at the zero vector is zero instead of NaN."""
    return torch.sqrt((v * v).sum(dim=dim) + eps * eps) - eps


def spatial_gradient(
    values: torch.Tensor, points: torch.Tensor, create_graph: bool = False
) -> torch.Tensor:
    """d(values)/d(points) row-wise, for values that depend on their own row only."""
    (grad,) = torch.autograd.grad(
        values,
        points,
        grad_outputs=torch.ones_like(values),
        create_graph=create_graph,
        retain_graph=True if create_graph else None,
    )
    return grad


def backward(loss: torch.Tensor, params: Optional[Iterable[torch.Tensor]] = None) -> None:
    """
    Back-propagate a scalar loss.

    Gradients accumulate across calls until the optimizer zeroes them. Parameters
    in ``params`` that the loss does not reach get a zero gradient.
    """
    if loss.numel() != 1:
        raise ValueError("backward requires a scalar loss")
    loss.backward()
    if params is not None:
        for p in params:
            if p.grad is None:
                p.grad = torch.zeros_like(p)


def cosine_lr(base_lr: float, step: int, total: int, min_factor: float = 0.05) -> float:
    """Cosine decay from ``base_lr`` to ``base_lr * min_factor`` over ``total`` steps."""
    if total <= 1:
        return base_lr
    progress = min(max(step / (total - 1), 0.0), 1.0)
    factor = min_factor + (1.0 - min_factor) * 0.5 * (1.0 + math.cos(math.pi * progress))
    return base_lr * factor


class AdamOptimizer:
    """
    Adam with bias correction, skipping any step whose gradients are not finite.

    The optimizer state (step count, first and second moments per parameter)
    is the one kept by ``torch.optim.Adam`` and round-trips through checkpoints.
    """

    def __init__(
        self,
        params: Iterable[torch.Tensor],
        lr: float = 5e-4,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.params = [p for p in params if p.requires_grad]
        self._adam = torch.optim.Adam(self.params, lr=lr, betas=betas, eps=eps)
        self.skipped_steps = 0

    @property
    def lr(self) -> float:
        return self._adam.param_groups[0]["lr"]

    def set_lr(self, lr: float) -> None:
        for group in self._adam.param_groups:
            group["lr"] = lr

    def zero_grad(self) -> None:
        self._adam.zero_grad(set_to_none=False)

    def grads_finite(self) -> bool:
        return all(p.grad is None or bool(torch.isfinite(p.grad).all()) for p in self.params)

    def step(self) -> bool:
        """
        Apply one Adam update.

        Returns:
            False if the step was skipped because a gradient was NaN/Inf.
        """
        if not self.grads_finite():
            self.skipped_steps += 1
            logger.warning(format_fields(event="adam_step_skipped", reason="non_finite_gradient"))
            self.zero_grad()
            return False
        self._adam.step()
        return True

    def state_tensors(self) -> Dict[str, torch.Tensor]:
        """Flatten optimizer state into named tensors for checkpointing."""
        out = {}
        for i, p in enumerate(self.params):
            state = self._adam.state.get(p)
            if not state:
                continue
            out[f"adam.{i}.step"] = torch.as_tensor(state["step"], dtype=DTYPE).reshape(1)
            out[f"adam.{i}.exp_avg"] = state["exp_avg"].detach().clone()
            out[f"adam.{i}.exp_avg_sq"] = state["exp_avg_sq"].detach().clone()
        return out

    def load_state_tensors(self, tensors: Dict[str, torch.Tensor]) -> None:
        """Restore state written by :meth:`state_tensors`."""
        for i, p in enumerate(self.params):
            key = f"adam.{i}.step"
            if key not in tensors:
                continue
            self._adam.state[p] = {
                "step": torch.tensor(float(tensors[key].reshape(-1)[0].item())),
                "exp_avg": tensors[f"adam.{i}.exp_avg"].clone().to(DTYPE),
                "exp_avg_sq": tensors[f"adam.{i}.exp_avg_sq"].clone().to(DTYPE),
            }
