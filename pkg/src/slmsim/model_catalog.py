"""Model architectures and the sizing formulas derived from them."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

from .errors import ValidationError

FP16 = 2


@dataclass(frozen=True)
class ModelSpec:
    """Architecture constants of a decoder-only transformer.

    ``n_params`` is the nominal parameter count (e.g. ``1_300_000_000``),
    which is what the published weight sizes are computed from.
    """

    name: str
    n_params: int
    n_layers: int
    n_heads: int
    head_dim: int
    hidden: int
    bytes_per_value: int = FP16

    def __post_init__(self):
        for field in ("n_params", "n_layers", "n_heads", "head_dim", "hidden"):
            value = getattr(self, field)
            if field == "n_params" and value == 0:
                continue  # synthetic weightless models are allowed
            if value <= 0:
                raise ValidationError(field, f"must be positive, got {value}")
        if self.bytes_per_value not in (1, 2, 4):
            raise ValidationError("bytes_per_value", f"must be 1, 2 or 4, got {self.bytes_per_value}")
        if self.n_heads * self.head_dim != self.hidden:
            warnings.warn(
                f"{self.name}: n_heads*head_dim={self.n_heads * self.head_dim} "
                f"differs from hidden={self.hidden}",
                stacklevel=3,
            )

    @property
    def attn_width(self) -> int:
        return self.n_heads * self.head_dim


def weights_bytes(model: ModelSpec) -> int:
    return model.n_params * model.bytes_per_value


def kv_bytes_per_token(model: ModelSpec) -> int:
    """Bytes of key+value cache one token occupies across all layers."""
    return 2 * model.bytes_per_value * model.hidden * model.n_layers


def flops_per_token(model: ModelSpec, seq_len):
    """Forward-pass FLOPs for one token attending over ``seq_len`` tokens.

    ``2N`` for the dense matmuls plus ``6*L*H*Q*T`` for attention. Integer
    ``seq_len`` gives an exact integer result.
    """
    if seq_len < 0:
        raise ValidationError("seq_len", f"must be non-negative, got {seq_len}")
    return 2 * model.n_params + 6 * model.n_layers * model.attn_width * seq_len


OPT_125M = ModelSpec("OPT-125M", 125_000_000, n_layers=12, n_heads=12, head_dim=64, hidden=768)
OPT_1_3B = ModelSpec("OPT-1.3B", 1_300_000_000, n_layers=24, n_heads=32, head_dim=64, hidden=2048)
OPT_2_7B = ModelSpec("OPT-2.7B", 2_700_000_000, n_layers=32, n_heads=32, head_dim=80, hidden=2560)
OPT_6_7B = ModelSpec("OPT-6.7B", 6_700_000_000, n_layers=32, n_heads=32, head_dim=128, hidden=4096)
OPT_13B = ModelSpec("OPT-13B", 13_000_000_000, n_layers=40, n_heads=40, head_dim=128, hidden=5120)

BUILTIN_MODELS = (OPT_125M, OPT_1_3B, OPT_2_7B, OPT_6_7B, OPT_13B)


class ModelCatalog:
    """Named collection of model specs, seeded with the OPT family."""

    def __init__(self, extra=()):
        self._entries = {m.name: m for m in BUILTIN_MODELS}
        for model in extra:
            self.add(model)

    def add(self, model: ModelSpec):
        self._entries[model.name] = model

    def __getitem__(self, name: str) -> ModelSpec:
        try:
            return self._entries[name]
        except KeyError:
            known = ", ".join(self._entries)
            raise ValidationError("model", f"unknown model {name!r} (known: {known})") from None

    def __contains__(self, name):
        return name in self._entries

    def __iter__(self):
        return iter(self._entries.values())

    def __len__(self):
        return len(self._entries)

    def names(self):
        return list(self._entries)
