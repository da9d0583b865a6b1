"""Run configuration: model hyperparameters, training budget, and the
documented hyperparameter search space.

Configs serialize to a flat ``key=value`` text file; the CLI accepts the
same keys via ``--set key=value`` overrides. Unknown keys are a hard error.
"""

import dataclasses
import logging
from dataclasses import dataclass

from .errors import ConfigError

log = logging.getLogger(__name__)

SEARCH_GRID = {
    "hidden": [16, 32, 64],
    "learning_rate": [0.01, 0.005],
    "dropout": [0.0, 0.5, 0.99],
    "weight_decay": [1e-3, 5e-4, 5e-5, 5e-6],
    "num_selected_m": [1, 2, 4, 8],
}

SELECTION_MODES = ("hard_scaled", "soft")
CELL_TYPES = ("tanh_cell", "lstm_cell")
POOL_MODES = ("max", "mean")
SEQUENCE_ORDERS = ("ascending", "shuffle")

_warned_off_grid = set()


@dataclass
class ModelConfig:
    hidden: int = 32
    learning_rate: float = 0.01
    dropout: float = 0.5
    weight_decay: float = 5e-4
    num_selected_m: int = 4
    depth_k: int = 2
    max_len_L: int = 16
    selection_mode: str = "hard_scaled"
    cell_type: str = "tanh_cell"
    layers: int = 1
    seed: int = 0
    conv_width: int = 3
    conv_channels: int = 0          # 0 means "same as hidden"
    ego_dim: int = 0                # 0 means "same as hidden"
    pool: str = "max"
    epochs: int = 2000
    patience: int = 100
    sequence_order: str = "ascending"

    def resolved_conv_channels(self):
        return self.conv_channels or self.hidden

    def resolved_ego_dim(self):
        return self.ego_dim or self.hidden

    def validate(self):
        if self.hidden < 1:
            raise ConfigError(f"hidden must be >= 1, got {self.hidden}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.num_selected_m < 1:
            raise ConfigError(f"num_selected_m must be >= 1, got {self.num_selected_m}")
        if self.depth_k < 0:
            raise ConfigError(f"depth_k must be >= 0, got {self.depth_k}")
        if self.max_len_L < 1:
            raise ConfigError(f"max_len_L must be >= 1, got {self.max_len_L}")
        if self.selection_mode not in SELECTION_MODES:
            raise ConfigError(f"selection_mode must be one of {SELECTION_MODES}")
        if self.cell_type not in CELL_TYPES:
            raise ConfigError(f"cell_type must be one of {CELL_TYPES}")
        if self.pool not in POOL_MODES:
            raise ConfigError(f"pool must be one of {POOL_MODES}")
        if self.sequence_order not in SEQUENCE_ORDERS:
            raise ConfigError(f"sequence_order must be one of {SEQUENCE_ORDERS}")
        if self.layers < 1:
            raise ConfigError(f"layers must be >= 1, got {self.layers}")
        if self.conv_width < 1:
            raise ConfigError(f"conv_width must be >= 1, got {self.conv_width}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        for key, grid in SEARCH_GRID.items():
            value = getattr(self, key)
            if value not in grid and (key, value) not in _warned_off_grid:
                _warned_off_grid.add((key, value))
                log.warning("config: %s=%s is outside the documented grid %s",
                            key, value, grid)
        return self

    def replace(self, **kwargs):
        return dataclasses.replace(self, **kwargs)

    def to_dict(self):
        return dataclasses.asdict(self)


_FIELDS = {f.name: f.type for f in dataclasses.fields(ModelConfig)}


def _coerce(key, raw):
    kind = _FIELDS[key]
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return str(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def apply_overrides(cfg, overrides):
    """Apply ``key=value`` strings; unknown keys are a hard error."""
    updates = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, _, raw = item.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        updates[key] = _coerce(key, raw.strip())
    return cfg.replace(**updates)


def save_config(cfg, path):
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in cfg.to_dict().items():
            fh.write(f"{key}={value}\n")


def load_config(path, base=None):
    cfg = base or ModelConfig()
    overrides = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected key=value")
            key, _, raw = line.partition("=")
            overrides.append(f"{key.strip()}={raw.strip()}")
    return apply_overrides(cfg, overrides)
