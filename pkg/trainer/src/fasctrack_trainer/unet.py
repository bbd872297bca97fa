"""Encoder-decoder segmentation network with skip connections.

Five resolution levels: four downsampling steps that double the channel
count, a mirrored expansive path with 2x2 up-convolutions that halve it,
and a final 1x1 convolution to one sigmoid probability channel. All 3x3
convolutions are padded so the output grid matches the input grid.
Counting the up-convolutions and the final 1x1, the network has 23
convolutional layers.
"""

from __future__ import annotations

import torch
import torch.nn as nn

INPUT_SIZE = 512
DEPTH = 5  # resolution levels; 4 pooling steps
DEFAULT_BASE_CHANNELS = 64


def _double_conv(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, kernel_size=3, padding=1),
        nn.ReLU(inplace=True),
        nn.Conv2d(cout, cout, kernel_size=3, padding=1),
        nn.ReLU(inplace=True),
    )


class UNet(nn.Module):
    def __init__(self, base_channels: int = DEFAULT_BASE_CHANNELS):
        super().__init__()
        if base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        c = base_channels
        self.base_channels = c
        self.pool = nn.MaxPool2d(2)
        self.enc1 = _double_conv(1, c)
        self.enc2 = _double_conv(c, 2 * c)
        self.enc3 = _double_conv(2 * c, 4 * c)
        self.enc4 = _double_conv(4 * c, 8 * c)
        self.bottleneck = _double_conv(8 * c, 16 * c)
        self.up4 = nn.ConvTranspose2d(16 * c, 8 * c, kernel_size=2, stride=2)
        self.dec4 = _double_conv(16 * c, 8 * c)
        self.up3 = nn.ConvTranspose2d(8 * c, 4 * c, kernel_size=2, stride=2)
        self.dec3 = _double_conv(8 * c, 4 * c)
        self.up2 = nn.ConvTranspose2d(4 * c, 2 * c, kernel_size=2, stride=2)
        self.dec2 = _double_conv(4 * c, 2 * c)
        self.up1 = nn.ConvTranspose2d(2 * c, c, kernel_size=2, stride=2)
        self.dec1 = _double_conv(2 * c, c)
        self.head = nn.Conv2d(c, 1, kernel_size=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        e1 = self.enc1(x)
        e2 = self.enc2(self.pool(e1))
        e3 = self.enc3(self.pool(e2))
        e4 = self.enc4(self.pool(e3))
        b = self.bottleneck(self.pool(e4))
        d4 = self.dec4(torch.cat([e4, self.up4(b)], dim=1))
        d3 = self.dec3(torch.cat([e3, self.up3(d4)], dim=1))
        d2 = self.dec2(torch.cat([e2, self.up2(d3)], dim=1))
        d1 = self.dec1(torch.cat([e1, self.up1(d2)], dim=1))
        return torch.sigmoid(self.head(d1))


def build_unet(base_channels: int = DEFAULT_BASE_CHANNELS) -> UNet:
    return UNet(base_channels=base_channels)


def conv_layer_census(model: nn.Module) -> int:
    """Number of convolutional layers, up-convolutions included."""
    return sum(
        1 for m in model.modules() if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d))
    )


def encoder_channel_progression(model: UNet) -> list[int]:
    """Output channel count of each encoder stage, shallow to deep."""
    stages = [model.enc1, model.enc2, model.enc3, model.enc4, model.bottleneck]
    return [stage[2].out_channels for stage in stages]
