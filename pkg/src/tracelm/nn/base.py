"""Model configuration and the small parameter-registry base class."""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from ..errors import ConfigError
from .autograd import Tensor

LSTM = "lstm"
TRANSFORMER = "transformer"


@dataclass(frozen=True)
class ModelConfig:
    """Architecture settings for both model kinds.

    tf_width is the Transformer residual width; inputs whose dimension
    differs are passed through a learned input projection. With None the
    width tracks the input dimension padded up to a multiple of tf_heads.
    The default 72 equals the all-arguments event vector (64) plus the
    position channel (8), so every ablation runs at the same width and the
    per-epoch cost of adding arguments stays marginal.
    """

    kind: str = TRANSFORMER
    lstm_layers: int = 2
    lstm_hidden: int = 96
    tf_layers: int = 6
    tf_heads: int = 8
    tf_ff: int = 128
    tf_width: int | None = 72
    d_position: int = 8
    dropout: float = 0.0

    def __post_init__(self):
        if self.kind not in (LSTM, TRANSFORMER):
            raise ConfigError(f"unknown model kind {self.kind!r}")
        for name in ("lstm_layers", "lstm_hidden", "tf_layers", "tf_heads", "tf_ff"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.d_position < 0 or self.d_position % 2 != 0:
            raise ConfigError("d_position must be an even integer >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.tf_width is not None and self.tf_width % self.tf_heads != 0:
            raise ConfigError(
                f"tf_width {self.tf_width} must be divisible by tf_heads {self.tf_heads}"
            )

    def resolve_width(self, input_dim: int) -> int:
        if self.tf_width is not None:
            return self.tf_width
        return ((input_dim + self.tf_heads - 1) // self.tf_heads) * self.tf_heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


class Model:
    """Explicit named-parameter registry with state export/import."""

    kind: str = ""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}

    def _param(self, name: str, array: np.ndarray) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(array, dtype=self.dtype), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def _linear_init(self, rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        if set(arrays) != set(self.params):
            missing = set(self.params) ^ set(arrays)
            raise ValueError(f"parameter set mismatch: {sorted(missing)}")
        for name, p in self.params.items():
            src = np.asarray(arrays[name], dtype=self.dtype)
            if src.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: {src.shape} vs {p.data.shape}")
            p.data[...] = src
