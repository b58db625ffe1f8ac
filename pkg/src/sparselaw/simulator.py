"""Synthetic sweep datasets drawn from a known scaling law."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError
from .law import RunRecord, ScalingLawCoefficients, SweepDataset, eval_law

# Data consumed per training step. T5 uses batch 128 of 512-token inputs
# (1M steps ~ 65B tokens); ViT uses batch 4096 images (440K steps ~ 1.8B images).
T5_TOKENS_PER_STEP = 128 * 512
VIT_IMAGES_PER_STEP = 4096

SPARSITY_LEVELS = (0.0, 0.5, 0.75, 0.875)


@dataclass(frozen=True)
class SweepGrid:
    nonzero_param_levels: tuple[float, ...]
    data_levels: tuple[float, ...]
    sparsity_levels: tuple[float, ...]
    pattern: str = "unstructured"
    data_unit: str = "tokens"

    def __post_init__(self):
        for name in ("nonzero_param_levels", "data_levels", "sparsity_levels"):
            levels = tuple(float(x) for x in getattr(self, name))
            if not levels:
                raise DomainError(f"{name} must not be empty")
            object.__setattr__(self, name, levels)
        if any(not x > 0 for x in self.nonzero_param_levels + self.data_levels):
            raise DomainError("size and data levels must be positive")
        if any(not 0 <= s < 1 for s in self.sparsity_levels):
            raise DomainError("sparsity levels must lie in [0, 1)")

    def points(self) -> list[tuple[float, float, float]]:
        """(S, N, D) triples, sparsity-major."""
        return list(itertools.product(self.sparsity_levels, self.nonzero_param_levels, self.data_levels))

    def __len__(self):
        return len(self.sparsity_levels) * len(self.nonzero_param_levels) * len(self.data_levels)


def vit_grid(images_per_step: float = VIT_IMAGES_PER_STEP) -> SweepGrid:
    """7 sizes doubling up to 42.4M non-zeros, 55K-440K steps."""
    sizes = tuple(42.4e6 / 2 ** k for k in range(6, -1, -1))
    steps = (55e3, 110e3, 220e3, 440e3)
    return SweepGrid(sizes, tuple(s * images_per_step for s in steps), SPARSITY_LEVELS,
                     data_unit="images")


def t5_grid(tokens_per_step: float = T5_TOKENS_PER_STEP) -> SweepGrid:
    """4 sizes quadrupling up to 85M non-zeros, 250K-1M steps."""
    sizes = tuple(85e6 / 4 ** k for k in range(3, -1, -1))
    steps = (250e3, 500e3, 1e6)
    return SweepGrid(sizes, tuple(s * tokens_per_step for s in steps), SPARSITY_LEVELS,
                     data_unit="tokens")


def reduced_grid(grid: SweepGrid, sparsity_levels: Sequence[float], pattern: str) -> list[tuple[float, float, float]]:
    """Runs using the smallest model or the fewest steps, at the given sparsities."""
    n_min, d_min = min(grid.nonzero_param_levels), min(grid.data_levels)
    pts = itertools.product(sparsity_levels, grid.nonzero_param_levels, grid.data_levels)
    return [(s, n, d) for s, n, d in pts if n == n_min or d == d_min]


PRESET_GRIDS = {"vit": vit_grid, "t5": t5_grid}


def _record_noise(seed: int, index: int) -> float:
    return float(np.random.default_rng([seed, index]).standard_normal())


def simulate_points(truth: ScalingLawCoefficients, points, noise_sigma: float = 0.0, seed: int = 0,
                    family: str | None = None, pattern: str = "unstructured",
                    data_unit: str = "tokens") -> SweepDataset:
    if not noise_sigma >= 0:
        raise DomainError("noise_sigma must be non-negative")
    records = []
    for i, (S, N, D) in enumerate(points):
        loss = eval_law(truth, S, N, D)
        if noise_sigma > 0:
            loss *= float(np.exp(noise_sigma * _record_noise(seed, i)))
        rec_pattern = "unstructured" if S == 0 else pattern
        records.append(RunRecord(S, N, D, loss, rec_pattern))
    return SweepDataset(tuple(records), family or truth.family, data_unit)


def simulate_sweep(truth: ScalingLawCoefficients, grid: SweepGrid, noise_sigma: float = 0.0,
                   seed: int = 0, family: str | None = None) -> SweepDataset:
    """One record per grid point; loss = law * exp(noise), noise ~ Normal(0, sigma^2).

    Each record's noise is drawn from a generator keyed on (seed, record index),
    so the output does not depend on generation order.
    """
    return simulate_points(truth, grid.points(), noise_sigma, seed, family, grid.pattern, grid.data_unit)
