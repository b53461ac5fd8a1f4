"""Encoder-decoder flow networks with multi-scale side outputs.

One recipe serves all variants.  The encoder applies down_steps stride-2
convolutions (kernel 7, then 5, 5, then 3s; stages from the third on get
a stride-1 companion convolution).  The decoder applies four transposed
convolutions, each followed by a flow prediction from the concatenation
of the up-sampled features, the encoder features at that scale, and the
up-sampled coarser flow.  At full resolution, where no encoder feature
map exists, the two input frames themselves serve as the skip.

forward() returns the side outputs coarsest first plus the full-frame
flow (bilinearly up-scaled when the native output is coarser than the
input).
"""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F

from .config import DECODER_STEPS, NetworkSpec


def _conv(in_ch: int, out_ch: int, kernel: int, stride: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel, stride=stride, padding=kernel // 2),
        nn.LeakyReLU(0.1, inplace=True),
    )


def _encoder_kernel(stage: int) -> int:
    if stage == 0:
        return 7
    return 5 if stage <= 2 else 3


class FlowNet(nn.Module):
    def __init__(self, spec: NetworkSpec):
        super().__init__()
        self.spec = spec
        n = spec.down_steps

        stages = []
        in_ch = 2
        for k in range(n):
            out_ch = spec.channels[k]
            layers = [_conv(in_ch, out_ch, _encoder_kernel(k), stride=2)]
            if k >= 2:
                layers.append(_conv(out_ch, out_ch, 3, stride=1))
            stages.append(nn.Sequential(*layers))
            in_ch = out_ch
        self.encoder = nn.ModuleList(stages)

        self.predict = nn.ModuleList()
        self.deconv = nn.ModuleList()
        self.upflow = nn.ModuleList()
        self.predict.append(nn.Conv2d(in_ch, 2, 3, padding=1))
        feat_ch = in_ch
        for j in range(DECODER_STEPS):
            out_ch = spec.decoder_channels[j]
            self.deconv.append(
                nn.Sequential(
                    nn.ConvTranspose2d(feat_ch, out_ch, 4, stride=2, padding=1),
                    nn.LeakyReLU(0.1, inplace=True),
                )
            )
            self.upflow.append(nn.ConvTranspose2d(2, 2, 4, stride=2, padding=1))
            skip_ch = self._skip_channels(j)
            feat_ch = out_ch + skip_ch + 2
            self.predict.append(nn.Conv2d(feat_ch, 2, 3, padding=1))

        for m in self.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                nn.init.kaiming_normal_(m.weight, a=0.1)
                nn.init.zeros_(m.bias)

    def _skip_channels(self, up_step: int) -> int:
        # After up_step + 1 up-samplings the scale is 2^(down_steps - up_step - 1);
        # the matching encoder stage is one level shallower, or the raw
        # input pair once the scale reaches 1.
        stage = self.spec.down_steps - up_step - 2
        return self.spec.channels[stage] if stage >= 0 else 2

    def check_size(self, height: int, width: int) -> None:
        d = self.spec.divisor
        bad = []
        for name, size in (("height", height), ("width", width)):
            if size % d:
                need = -(-size // d) * d
                bad.append(f"{name} {size} (pad to {need})")
        if bad:
            raise ValueError(
                f"input sides must be multiples of {d} for the "
                f"{self.spec.variant.value} variant: " + ", ".join(bad)
            )

    def forward(self, x: torch.Tensor) -> tuple[list[torch.Tensor], torch.Tensor]:
        if x.dim() != 4 or x.shape[1] != 2:
            raise ValueError(f"expected a (batch, 2, H, W) input, got {tuple(x.shape)}")
        self.check_size(x.shape[2], x.shape[3])

        skips = [x]
        feat = x
        for stage in self.encoder:
            feat = stage(feat)
            skips.append(feat)

        flows = [self.predict[0](feat)]
        for j in range(DECODER_STEPS):
            up = self.deconv[j](feat)
            flow_up = self.upflow[j](flows[-1])
            skip = skips[self.spec.down_steps - j - 1]
            feat = torch.cat([up, skip, flow_up], dim=1)
            flows.append(self.predict[j + 1](feat))

        full = flows[-1]
        if self.spec.native_scale > 1:
            full = F.interpolate(
                full, scale_factor=self.spec.native_scale, mode="bilinear", align_corners=False
            )
        return flows, full


def build_model(spec: NetworkSpec) -> FlowNet:
    return FlowNet(spec)
