"""Model-construction options shared by assembly, code generation and the CLI."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import SmoothforgeError

GAMMA_SHAPE = 0.05
GAMMA_RATE = 0.005


class SpPrior(enum.Enum):
    GAMMA = "gamma"
    LOGUNIFORM = "logunif"


@dataclass(frozen=True)
class CodegenOptions:
    """Smoothing-parameter prior and whether single-penalty smooths are diagonalized.

    ``lo``/``hi`` bound the uniform prior on log(lambda) and are ignored for
    the gamma prior.
    """

    sp_prior: SpPrior = SpPrior.GAMMA
    diagonalize: bool = False
    lo: float = -12.0
    hi: float = 12.0

    def __post_init__(self):
        if self.sp_prior is SpPrior.LOGUNIFORM:
            if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.lo >= self.hi:
                raise SmoothforgeError(
                    f"log-uniform bounds must be finite with lo < hi (got {self.lo}, {self.hi})"
                )
