"""Encoder-decoder segmentation network for per-point reliability.

The backbone is an efficient factorized-residual design: downsampler blocks
concatenate a stride-2 convolution with a pooled copy of the input, and the
residual blocks factor 3x3 convolutions into 3x1 + 1x3 pairs, with dilated
pairs deep in the encoder. Fringe composites are texture-poor inside a
fringe order and repeat across orders, so every downsampler pools by
averaging instead of max: the mean keeps low-contrast structure that a max
would flatten.

Layer plan (input H x W x 3, H and W divisible by 8):

    down 3->16, down 16->64, 5 residual blocks,
    down 64->128, 8 dilated residual blocks (2,4,6,8,2,4,6,8),
    up 128->64 + 2 blocks, up 64->16 + 2 blocks,
    transposed conv to H x W x 3, softmax over classes.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn


@dataclass(frozen=True)
class NetworkConfig:
    in_channels: int = 3
    classes: int = 3
    encoder_dropout: float = 0.3
    decoder_dropout: float = 0.03


class DownsamplerBlock(nn.Module):
    """Stride-2 conv concatenated with a mean-pooled copy of the input."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch - in_ch, 3, stride=2, padding=1)
        self.pool = nn.AvgPool2d(2, stride=2)
        self.bn = nn.BatchNorm2d(out_ch)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x):
        out = torch.cat([self.conv(x), self.pool(x)], dim=1)
        return self.act(self.bn(out))


class FactorizedResidualBlock(nn.Module):
    """Two 3x1/1x3 convolution pairs, the second dilated, with a skip."""

    def __init__(self, channels: int, dropout: float, dilation: int = 1):
        super().__init__()
        d = dilation
        self.conv3x1_1 = nn.Conv2d(channels, channels, (3, 1), padding=(1, 0))
        self.conv1x3_1 = nn.Conv2d(channels, channels, (1, 3), padding=(0, 1))
        self.bn1 = nn.BatchNorm2d(channels)
        self.conv3x1_2 = nn.Conv2d(
            channels, channels, (3, 1), padding=(d, 0), dilation=(d, 1)
        )
        self.conv1x3_2 = nn.Conv2d(
            channels, channels, (1, 3), padding=(0, d), dilation=(1, d)
        )
        self.bn2 = nn.BatchNorm2d(channels)
        self.drop = nn.Dropout2d(dropout)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x):
        out = self.act(self.conv3x1_1(x))
        out = self.act(self.bn1(self.conv1x3_1(out)))
        out = self.act(self.conv3x1_2(out))
        out = self.bn2(self.conv1x3_2(out))
        out = self.drop(out)
        return self.act(out + x)


class UpsamplerBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.ConvTranspose2d(
            in_ch, out_ch, 3, stride=2, padding=1, output_padding=1
        )
        self.bn = nn.BatchNorm2d(out_ch)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x):
        return self.act(self.bn(self.conv(x)))


class ReliabilityNet(nn.Module):
    """Maps an H x W x 3 composite to per-point class probabilities."""

    def __init__(self, config: NetworkConfig = NetworkConfig()):
        super().__init__()
        self.config = config
        enc_drop = config.encoder_dropout
        dec_drop = config.decoder_dropout
        self.encoder = nn.Sequential(
            DownsamplerBlock(config.in_channels, 16),
            DownsamplerBlock(16, 64),
            *[FactorizedResidualBlock(64, enc_drop) for _ in range(5)],
            DownsamplerBlock(64, 128),
            *[
                FactorizedResidualBlock(128, enc_drop, dilation=d)
                for d in (2, 4, 6, 8, 2, 4, 6, 8)
            ],
        )
        self.decoder = nn.Sequential(
            UpsamplerBlock(128, 64),
            FactorizedResidualBlock(64, dec_drop),
            FactorizedResidualBlock(64, dec_drop),
            UpsamplerBlock(64, 16),
            FactorizedResidualBlock(16, dec_drop),
            FactorizedResidualBlock(16, dec_drop),
        )
        self.head = nn.ConvTranspose2d(16, config.classes, 2, stride=2)

    def forward(self, x):
        if x.shape[-1] % 8 or x.shape[-2] % 8:
            raise ValueError(
                f"input spatial dims {tuple(x.shape[-2:])} must be divisible by 8"
            )
        scores = self.head(self.decoder(self.encoder(x)))
        return torch.softmax(scores, dim=1)


def build_model(config: NetworkConfig = NetworkConfig()) -> ReliabilityNet:
    return ReliabilityNet(config)
