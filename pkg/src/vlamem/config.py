"""Head configuration shared by the attention kernels."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = ["ConfigError", "HeadConfig", "U_MODES"]

# Penalty-direction modes:
#   unit-normalised-key   u_t is the unit feature key
#   scaled-by-inv-sqrt-d  u_t is the unit feature key divided by sqrt(d_h)
#   fixed-projection      u_t is the unit image of the raw key under a fixed
#                         seeded random projection
#   zero                  penalty disabled; the inverse stays isotropic
U_MODES = ("unit-normalised-key", "scaled-by-inv-sqrt-d", "fixed-projection", "zero")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class HeadConfig:
    d_h: int = 32
    lambda0: float = 0.1
    epsilon: float = 1e-4
    refresh_period: int = 20
    refresh_eta: float = 1e-3
    normalize_alpha: bool = True
    u_mode: str = "unit-normalised-key"
    u_seed: int = 0

    def __post_init__(self):
        if self.d_h < 1:
            raise ConfigError(f"d_h must be >= 1, got {self.d_h}")
        if self.lambda0 <= 0:
            raise ConfigError(f"lambda0 must be positive, got {self.lambda0}")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.refresh_period < 0:
            raise ConfigError(f"refresh_period must be >= 0, got {self.refresh_period}")
        if self.refresh_eta < 0:
            raise ConfigError(f"refresh_eta must be >= 0, got {self.refresh_eta}")
        if self.u_mode not in U_MODES:
            raise ConfigError(f"u_mode must be one of {U_MODES}, got {self.u_mode!r}")

    def u_projection(self) -> np.ndarray:
        """Fixed random projection used by the fixed-projection penalty mode."""
        return _projection(self.d_h, self.u_seed)


@lru_cache(maxsize=None)
def _projection(d_h: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    p = rng.standard_normal((d_h, d_h)) / np.sqrt(d_h)
    p.setflags(write=False)
    return p
