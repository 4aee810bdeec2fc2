"""Small shared network pieces."""

import torch
import torch.nn as nn
import torch.nn.functional as F


class ResidualBlock(nn.Module):
    """Conv+ReLU+Conv with an identity shortcut; spatial dims preserved."""

    def __init__(self, channels):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.conv2 = nn.Conv2d(channels, channels, 3, 1, 1)

    def forward(self, x):
        return x + self.conv2(F.relu(self.conv1(x)))


class MultiScaleResidualBlock(nn.Module):
    """Parallel 3x3 and 5x5 branches, concatenated, 1x1 projection, shortcut."""

    def __init__(self, channels):
        super().__init__()
        self.branch3 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.branch5 = nn.Conv2d(channels, channels, 5, 1, 2)
        self.project = nn.Conv2d(2 * channels, channels, 1)

    def forward(self, x):
        merged = torch.cat([F.relu(self.branch3(x)), F.relu(self.branch5(x))], dim=1)
        return x + self.project(merged)


def zero_init(conv):
    """Zero a conv's weight and bias in place; returns the conv."""
    nn.init.zeros_(conv.weight)
    if conv.bias is not None:
        nn.init.zeros_(conv.bias)
    return conv
