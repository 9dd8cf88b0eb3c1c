"""Synthetic response spaces for desk-scale experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from core.distributions import ResponseSpace, build_space
from core.enums.tilt_kind import SpaceDistribution
from core.exceptions import SpaceError


@dataclass(frozen=True, slots=True)
class SpaceRecipe:
    """Parameters of one synthetic space family"""

    size: int = 100
    distribution: SpaceDistribution = SpaceDistribution.DIRICHLET
    alpha: float = 1.0
    zipf_s: float = 1.1
    attribute_reward_corr: float = 0.3
    attribute_rarity_corr: float = 0.3
    attribute_scale: float = 50.0
    attribute_base: float = 200.0

    def __post_init__(self) -> None:
        if self.size < 2:
            raise SpaceError("Synthetic spaces need at least two responses")
        corr = self.attribute_reward_corr**2 + self.attribute_rarity_corr**2
        if corr > 1.0:
            raise SpaceError(
                "attribute_reward_corr^2 + attribute_rarity_corr^2 must not exceed 1"
            )


def _zscore(values: np.ndarray) -> np.ndarray:
    std = values.std()
    if std == 0:
        return np.zeros_like(values)
    return (values - values.mean()) / std


def _draw_probs(recipe: SpaceRecipe, gen: np.random.Generator) -> np.ndarray:
    size = recipe.size
    match recipe.distribution:
        case SpaceDistribution.UNIFORM:
            return np.full(size, 1.0 / size)
        case SpaceDistribution.DIRICHLET:
            probs = gen.dirichlet(np.full(size, recipe.alpha))
        case SpaceDistribution.ZIPF:
            weights = np.arange(1, size + 1, dtype=np.float64) ** -recipe.zipf_s
            probs = gen.permutation(weights / weights.sum())
    # dirichlet draws with tiny alpha can underflow to exact zeros
    probs = np.maximum(probs, np.finfo(np.float64).tiny * 1e3)
    return probs / probs.sum()


def generate_space(
    recipe: SpaceRecipe, gen: np.random.Generator, prompt_id: str = "prompt-0"
) -> ResponseSpace:
    """One synthetic space: family probabilities, distinct normal rewards, length-like attribute.

    The attribute is a standardized mix of reward rank, rarity (-log p) and
    noise, so mass drifting toward rare responses shows up in its mean.
    """
    probs = _draw_probs(recipe, gen)
    rewards = gen.standard_normal(recipe.size)
    while np.unique(rewards).size != recipe.size:
        rewards = gen.standard_normal(recipe.size)

    rank = np.argsort(np.argsort(rewards)).astype(np.float64)
    noise_weight = np.sqrt(
        max(0.0, 1.0 - recipe.attribute_reward_corr**2 - recipe.attribute_rarity_corr**2)
    )
    mix = (
        recipe.attribute_reward_corr * _zscore(rank)
        + recipe.attribute_rarity_corr * _zscore(-np.log(probs))
        + noise_weight * gen.standard_normal(recipe.size)
    )
    attribute = recipe.attribute_base + recipe.attribute_scale * mix
    return build_space(probs, rewards, attribute, prompt_id=prompt_id)


def generate_spaces(recipe: SpaceRecipe, count: int, seed: int) -> list[ResponseSpace]:
    """``count`` independent spaces, space k drawn from its own seed stream"""
    spaces = []
    for k in range(count):
        gen = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
        spaces.append(generate_space(recipe, gen, prompt_id=f"prompt-{k}"))
    return spaces
