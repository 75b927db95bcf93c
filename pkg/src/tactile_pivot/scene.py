"""Procedural planar object families and randomized scene sampling.

Objects are thin planar profiles described by a half-width function along
their principal axis. Five families cover the silhouette variety the
pivoting policy sees through the gel sensors: constant rods, tapered
wedges, stepped T-bars, bottle-like neck+body profiles and hammer-like
shaft+head profiles.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

# Randomization ranges (SI units / radians).
LENGTH_RANGE = (0.13, 0.18)
WIDTH_RANGE = (0.010, 0.022)
GRASP_FRACTION_RANGE = (0.10, 0.30)
TABLE_HEIGHT_RANGE = (0.0, 0.20)
INIT_ANGLE_RANGE = (math.radians(165.0), math.radians(195.0))
TARGET_ANGLE_RANGE = (math.radians(90.0), math.radians(150.0))


class Family(enum.Enum):
    ROD = "rod"
    WEDGE = "wedge"
    TBAR = "tbar"
    BOTTLE = "bottle"
    HAMMER = "hammer"


ALL_FAMILIES = (Family.ROD, Family.WEDGE, Family.TBAR, Family.BOTTLE, Family.HAMMER)


class ConfigError(ValueError):
    """Invalid configuration or sampling request."""


@dataclass(frozen=True)
class ObjectShape:
    """A planar object: axis length, max width and a half-width profile.

    ``profile_params`` is family-specific; ``half_width`` evaluates the
    piecewise cross-section. Axial coordinate s runs from the near (grasped)
    end at 0 to the pivoting tip at ``length``.
    """

    family: Family
    length: float
    width: float
    grasp_fraction: float
    profile_params: tuple = field(default=())

    def half_width(self, s):
        """Half-width of the cross-section at axial position(s) ``s`` (m)."""
        s = np.asarray(s, dtype=np.float64)
        L = self.length
        w2 = self.width / 2.0
        fam = self.family
        if fam is Family.ROD:
            return np.full_like(s, w2)
        if fam is Family.WEDGE:
            # linear taper from near-end half-width to tip half-width
            h0, h1 = self.profile_params
            return h0 + (h1 - h0) * np.clip(s / L, 0.0, 1.0)
        if fam is Family.TBAR:
            # step: thin bar, wide head occupying the tip-side fraction
            h_bar, head_frac = self.profile_params
            return np.where(s >= L * (1.0 - head_frac), w2, h_bar)
        if fam is Family.BOTTLE:
            # wide body near the grasp, narrow neck toward the tip
            h_neck, neck_frac = self.profile_params
            return np.where(s >= L * (1.0 - neck_frac), h_neck, w2)
        if fam is Family.HAMMER:
            # thin shaft with a short wide head at the very tip
            h_shaft, head_frac = self.profile_params
            return np.where(s >= L * (1.0 - head_frac), w2, h_shaft)
        raise ConfigError(f"unknown family {fam!r}")


@dataclass(frozen=True)
class SceneSpec:
    """One randomized episode setup."""

    object: ObjectShape
    table_height: float
    init_rel_angle: float
    target_rel_angle: float
    seed: int


@dataclass(frozen=True)
class TaskRanges:
    """Randomization ranges, overridable from the [task] config section."""

    length: tuple = LENGTH_RANGE
    table_height: tuple = TABLE_HEIGHT_RANGE
    init_angle: tuple = INIT_ANGLE_RANGE
    target_angle: tuple = TARGET_ANGLE_RANGE


DEFAULT_RANGES = TaskRanges()


def make_object(
    family: Family, rng: np.random.Generator, length_range=LENGTH_RANGE
) -> ObjectShape:
    """Sample one object of the given family."""
    length = rng.uniform(*length_range)
    width = rng.uniform(*WIDTH_RANGE)
    grasp_fraction = rng.uniform(*GRASP_FRACTION_RANGE)
    w2 = width / 2.0
    if family is Family.ROD:
        params = ()
    elif family is Family.WEDGE:
        # tip strictly narrower than the near end
        h1 = w2 * rng.uniform(0.25, 0.6)
        params = (w2, h1)
    elif family is Family.TBAR:
        params = (w2 * rng.uniform(0.3, 0.55), rng.uniform(0.12, 0.25))
    elif family is Family.BOTTLE:
        params = (w2 * rng.uniform(0.3, 0.55), rng.uniform(0.25, 0.45))
    elif family is Family.HAMMER:
        params = (w2 * rng.uniform(0.3, 0.55), rng.uniform(0.10, 0.20))
    else:
        raise ConfigError(f"unknown family {family!r}")
    return ObjectShape(family, length, width, grasp_fraction, params)


def sample_scene(
    rng: np.random.Generator, families=ALL_FAMILIES, ranges: TaskRanges = DEFAULT_RANGES
) -> SceneSpec:
    """Draw a full SceneSpec with every scalar uniform in its range."""
    families = tuple(families)
    if not families:
        raise ConfigError("families must be a nonempty set")
    family = families[int(rng.integers(len(families)))]
    obj = make_object(family, rng, ranges.length)
    return SceneSpec(
        object=obj,
        table_height=rng.uniform(*ranges.table_height),
        init_rel_angle=rng.uniform(*ranges.init_angle),
        target_rel_angle=rng.uniform(*ranges.target_angle),
        seed=int(rng.integers(2**32)),
    )


def tip_offset(shape: ObjectShape) -> float:
    """Distance from the grasp point to the pivoting tip."""
    return (1.0 - shape.grasp_fraction) * shape.length
