"""Non-tactile observation modes and the PCA orientation estimator.

ObsMode selects what the policy sees: full tactile images, the ground-truth
relative angle (oracle upper bound), or proprioception only. The PCA
estimator recovers the imprint's major-axis orientation from a binary
tactile image and can drive the oracle policy in place of ground truth.
"""

from __future__ import annotations

import enum
import math

import numpy as np


class ObsMode(enum.Enum):
    TACTILE = "tactile"
    ORACLE_ANGLE = "oracle"
    PROPRIO_ONLY = "proprio"


MIN_ON_PIXELS = 20


def estimate_angle_pca(binary: np.ndarray) -> float | None:
    """Major-axis angle of the on-pixel set, in [0, pi) from the +x axis.

    Uses image coordinates with y pointing up (rows increase downward).
    Returns None when fewer than MIN_ON_PIXELS pixels are on.
    """
    img = np.asarray(binary)
    if img.ndim == 3:
        img = img[..., 0]
    rows, cols = np.nonzero(img > 0.5)
    if rows.size < MIN_ON_PIXELS:
        return None
    x = cols.astype(np.float64)
    y = -rows.astype(np.float64)
    x -= x.mean()
    y -= y.mean()
    cxx = float(x @ x)
    cyy = float(y @ y)
    cxy = float(x @ y)
    # principal direction of the 2x2 second-moment matrix
    angle = 0.5 * math.atan2(2.0 * cxy, cxx - cyy)
    return angle % math.pi


def pca_to_rel_angle(pca_angle: float) -> float:
    """Fold a PCA image angle into the rel-angle convention, mod pi.

    A vertical imprint (rel_angle = 180 deg) has PCA angle pi/2; a
    horizontal one (rel_angle = 90 deg) has PCA angle 0.
    """
    return (math.pi / 2.0 - pca_angle) % math.pi


class AngleUnfolder:
    """Resolves the mod-pi ambiguity of PCA estimates by continuity.

    Episodes start with the object hanging near 180 deg, so the first
    estimate unfolds toward pi; later estimates pick the candidate closest
    to the previous one. No-contact frames hold the last estimate.
    """

    def __init__(self, prior: float = math.pi):
        self.estimate = prior

    def update(self, pca_angle: float | None) -> float:
        if pca_angle is None:
            return self.estimate
        base = pca_to_rel_angle(pca_angle)
        candidates = [base + k * math.pi for k in range(0, 3)]
        self.estimate = min(candidates, key=lambda c: abs(c - self.estimate))
        return self.estimate


def run_pca_policy(policy_fn, env, spec=None) -> dict:
    """Run one episode with PCA-estimated angle substituted for ground truth.

    ``env`` must be a tactile PivotEnv in Binary mode; ``policy_fn`` maps an
    oracle-style observation vector to a deterministic action. Returns the
    terminal info dict plus the final angle estimate.
    """
    obs = env.reset(spec)
    unfolder = AngleUnfolder()
    done = False
    info: dict = {}
    while not done:
        est = unfolder.update(
            estimate_angle_pca(obs.tactile_left) if obs.tactile_left is not None else None
        )
        oracle_vec = np.concatenate([obs.vector, [est]]).astype(np.float32)
        action = policy_fn(oracle_vec)
        obs, _, done, info = env.step(action)
    info["angle_estimate"] = unfolder.estimate
    return info
