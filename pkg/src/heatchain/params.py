from __future__ import annotations

import math
from dataclasses import dataclass, field


class ParameterError(ValueError):
    """Raised when model or numerical parameters are out of range."""


@dataclass(frozen=True)
class ModelParams:
    """Chain size, noise intensities and bath temperatures.

    ``gamma`` is the momentum-exchange rate, ``gamma_tilde`` the Langevin
    friction at both ends, ``T_L``/``T_R`` the bath temperatures.
    """

    n: int
    gamma: float = 1.0
    gamma_tilde: float = 1.0
    T_L: float = 1.0
    T_R: float = 1.0
    c_bulk: float = field(init=False)
    c_bd: float = field(init=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ParameterError(f"n must be a positive integer, got {self.n!r}")
        for name in ("gamma", "gamma_tilde"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be > 0, got {getattr(self, name)!r}")
        for name in ("T_L", "T_R"):
            if not getattr(self, name) >= 0:
                raise ParameterError(f"{name} must be >= 0, got {getattr(self, name)!r}")
        g, gt = self.gamma, self.gamma_tilde
        object.__setattr__(self, "c_bulk", 1.0 / math.sqrt(8.0 * g))
        object.__setattr__(
            self, "c_bd", gt / (2.0 * math.sqrt(g) * math.pi * ((1.0 + gt) ** 2 + gt**2))
        )

    @property
    def T_bar(self) -> float:
        return 0.5 * (self.T_L + self.T_R)

    @property
    def time_scale(self) -> float:
        """Microscopic time units per unit of macroscopic time, n^{3/2}."""
        return float(self.n) ** 1.5

    def replace(self, **changes) -> "ModelParams":
        kw = dict(n=self.n, gamma=self.gamma, gamma_tilde=self.gamma_tilde,
                  T_L=self.T_L, T_R=self.T_R)
        kw.update(changes)
        return ModelParams(**kw)
