"""Compact residual CNN with channel attention for 32x32 imagery patches."""

from __future__ import annotations

import torch
from torch import nn

FILTERS = (16, 32, 48)
EMBED_DIM = FILTERS[-1]


class ChannelAttention(nn.Module):
    """Squeeze-and-excitation gate: global average pool, two-layer bottleneck,
    sigmoid rescaling of the channels."""

    def __init__(self, channels: int, reduction: int = 4):
        super().__init__()
        hidden = max(channels // reduction, 4)
        self.fc = nn.Sequential(
            nn.Linear(channels, hidden),
            nn.ReLU(inplace=True),
            nn.Linear(hidden, channels),
            nn.Sigmoid(),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        scale = self.fc(x.mean(dim=(2, 3)))
        return x * scale[:, :, None, None]


class ResidualBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int = 1):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_ch),
            ChannelAttention(out_ch),
        )
        if stride != 1 or in_ch != out_ch:
            self.skip = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_ch),
            )
        else:
            self.skip = nn.Identity()
        self.act = nn.ReLU(inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.act(self.body(x) + self.skip(x))


class SceneCNN(nn.Module):
    """Three attention-gated residual stages over a conv stem; global average
    pooling yields the penultimate feature vector reused as the embedding."""

    def __init__(self, in_bands: int, n_classes: int):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv2d(in_bands, FILTERS[0], 3, padding=1, bias=False),
            nn.BatchNorm2d(FILTERS[0]),
            nn.ReLU(inplace=True),
        )
        self.stages = nn.Sequential(
            ResidualBlock(FILTERS[0], FILTERS[0]),
            ResidualBlock(FILTERS[0], FILTERS[1], stride=2),
            ResidualBlock(FILTERS[1], FILTERS[2], stride=2),
        )
        self.head = nn.Linear(EMBED_DIM, n_classes)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """Penultimate feature vectors, shape (n, EMBED_DIM)."""
        return self.stages(self.stem(x)).mean(dim=(2, 3))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x))
