"""Network, schedule and loss configuration.

The three variants share one encoder-decoder recipe and differ only in
the number of stride-2 encoder stages:

==============  ==========  ====================================
variant         down-steps  native output resolution
==============  ==========  ====================================
baseline        6           1/4  (bilinear x4 to full)
f               4           full
h               5           1/2  (bilinear x2 to full)
==============  ==========  ====================================

The decoder always has four up-sampling stages, so the native output
scale is 2^(down_steps - 4).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

DECODER_STEPS = 4

# Per-scale side-output weights of the baseline training recipe, keyed
# by log2 of the downscaling factor of that side output.  Scales the
# baseline never predicted at get the new-level weight instead.
BASELINE_SCALE_WEIGHTS = {6: 0.32, 5: 0.08, 4: 0.02, 3: 0.01, 2: 0.005}
NEW_LEVEL_WEIGHT = 0.003


class Variant(Enum):
    BASELINE = "baseline"
    F = "f"
    H = "h"

    @property
    def down_steps(self) -> int:
        return {Variant.BASELINE: 6, Variant.F: 4, Variant.H: 5}[self]


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture knobs; channel widths are configuration, not constants.

    channels lists the output width of each stride-2 encoder stage; only
    the first down_steps entries are used.  Kernel sizes follow the
    recipe: 7 for the first stage, 5 for the next two, 3 afterwards.
    Stages from the third onward are followed by a stride-1 companion
    convolution of the same width.
    """

    variant: Variant = Variant.F
    channels: tuple[int, ...] = (64, 128, 256, 512, 512, 1024)
    decoder_channels: tuple[int, ...] = (512, 256, 128, 64)

    def __post_init__(self):
        if len(self.channels) < self.variant.down_steps:
            raise ValueError(
                f"{self.variant.value} needs {self.variant.down_steps} encoder widths, "
                f"got {len(self.channels)}"
            )
        if len(self.decoder_channels) != DECODER_STEPS:
            raise ValueError(f"decoder needs exactly {DECODER_STEPS} widths")
        if any(c < 1 for c in self.channels + self.decoder_channels):
            raise ValueError("channel widths must be positive")

    @property
    def down_steps(self) -> int:
        return self.variant.down_steps

    @property
    def divisor(self) -> int:
        """Input sides must be multiples of this."""
        return 2**self.down_steps

    @property
    def native_scale(self) -> int:
        """Downscaling factor of the finest side output."""
        return 2 ** (self.down_steps - DECODER_STEPS)

    @property
    def side_output_scales(self) -> tuple[int, ...]:
        """Downscaling factors, coarsest first: bottleneck then one per up-step."""
        return tuple(2**k for k in range(self.down_steps, self.down_steps - DECODER_STEPS - 1, -1))

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value,
            "channels": list(self.channels),
            "decoder_channels": list(self.decoder_channels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(
            variant=Variant(d["variant"]),
            channels=tuple(d["channels"]),
            decoder_channels=tuple(d["decoder_channels"]),
        )


@dataclass(frozen=True)
class LossSpec:
    """Per-level weights for the multi-scale endpoint-error loss.

    weights align with the side outputs coarsest first.  The defaults
    keep the baseline recipe's weight wherever that recipe predicted at
    the same scale and give each newly added finer level 0.003.
    """

    weights: tuple[float, ...]

    def __post_init__(self):
        if not self.weights:
            raise ValueError("at least one level is required")
        if any(w < 0 for w in self.weights):
            raise ValueError(f"weights must be >= 0, got {self.weights}")
        if not any(w > 0 for w in self.weights):
            raise ValueError("at least one weight must be > 0")

    @classmethod
    def for_spec(cls, spec: NetworkSpec) -> "LossSpec":
        weights = tuple(
            BASELINE_SCALE_WEIGHTS.get(int(math.log2(s)), NEW_LEVEL_WEIGHT)
            for s in spec.side_output_scales
        )
        return cls(weights=weights)


@dataclass(frozen=True)
class TrainingSchedule:
    """Optimization settings of the baseline recipe."""

    batch_size: int = 16
    initial_lr: float = 1e-4
    halve_every: int = 40
    epochs: int = 300

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or self.halve_every < 1:
            raise ValueError("batch_size, epochs and halve_every must be >= 1")
        if not self.initial_lr > 0:
            raise ValueError(f"initial_lr must be > 0, got {self.initial_lr}")

    def lr_at(self, epoch: int) -> float:
        if epoch < 0:
            raise ValueError(f"epoch must be >= 0, got {epoch}")
        return self.initial_lr * 2.0 ** (-(epoch // self.halve_every))

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "initial_lr": self.initial_lr,
            "halve_every": self.halve_every,
            "epochs": self.epochs,
        }
