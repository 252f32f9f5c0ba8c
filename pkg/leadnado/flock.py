import itertools
from typing import Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from leadnado.core import Dataset
from leadnado.evaluation import leadership_f1
from leadnado.factions import FactionTimeline, find_factions_and_initiators
from leadnado.network import DynamicNetwork, FollowingNetwork, NetworkBlock
from leadnado.sim import GroundTruth

DEFAULT_BETAS = (np.pi / 12, np.pi / 6, np.pi / 4, np.pi / 3)
DEFAULT_GAMMA_MULTIPLIERS = (2.0, 5.0, 10.0, 20.0)


class FlockParams(BaseModel):
    """Angle threshold beta (radians) and distance threshold gamma."""

    model_config = ConfigDict(frozen=True)

    beta: float = Field(default=np.pi / 6, gt=0, le=np.pi)
    gamma: float = Field(gt=0)


def median_step_length(u: Dataset) -> float:
    lengths = np.linalg.norm(np.diff(u.values, axis=1), axis=2)
    moving = lengths[lengths > 0]
    if moving.size == 0:
        raise ValueError("No individual ever moves; cannot derive a distance threshold")
    return float(np.median(moving))


def default_params(u: Dataset, beta: float = np.pi / 6, multiplier: float = 5.0) -> FlockParams:
    return FlockParams(beta=beta, gamma=multiplier * median_step_length(u))


def flock_network(u: Dataset, t: int, params: FlockParams, sigma: float = 0.5) -> FollowingNetwork:
    """
    Geometric following network at step t.

    A follows B when their step directions differ by less than beta, B is
    ahead of A along B's direction, and they are closer than gamma. When both
    directions qualify, the one with the larger forward projection is kept;
    equal projections drop both.
    """
    if t < 2 or t > u.t_star:
        raise ValueError(f"Step {t} must lie in [2, {u.t_star}]")

    pos = u.values[:, t - 1]
    direction = pos - u.values[:, t - 2]
    length = np.linalg.norm(direction, axis=1)
    moving = length > 0
    if not moving.all():
        logger.debug(f"t={t}: {int((~moving).sum())} individuals without a direction")

    unit = np.divide(direction, length[:, np.newaxis], out=np.zeros_like(direction), where=moving[:, np.newaxis])
    cosine = np.clip(unit @ unit.T, -1.0, 1.0)
    aligned = np.arccos(cosine) < params.beta

    # offset[a, b] = pos_b - pos_a, projected on b's direction
    offset = pos[np.newaxis, :, :] - pos[:, np.newaxis, :]
    projection = np.einsum("abk,bk->ab", offset, unit)
    close = np.linalg.norm(offset, axis=2) < params.gamma

    follows = aligned & (projection > 0) & close & moving[:, np.newaxis] & moving[np.newaxis, :]
    np.fill_diagonal(follows, False)

    both = follows & follows.T
    keep = projection > projection.T
    follows = np.where(both, keep, follows)

    return FollowingNetwork(ids=u.ids, adjacency=follows.astype(np.float64), sigma=sigma)


def flock_dynamic_network(u: Dataset, params: FlockParams) -> DynamicNetwork:
    """One network per step; step 1 reuses the network of step 2."""
    if u.t_star < 2:
        raise ValueError("FLOCK needs at least two time steps")

    blocks = [NetworkBlock(t_start=1, t_end=2, network=flock_network(u, 2, params))]
    blocks += [
        NetworkBlock(t_start=t, t_end=t, network=flock_network(u, t, params))
        for t in range(3, u.t_star + 1)
    ]
    return DynamicNetwork(ids=u.ids, blocks=blocks)


def flock_timeline(u: Dataset, params: Optional[FlockParams] = None) -> FactionTimeline:
    params = default_params(u) if params is None else params
    logger.info(f"FLOCK baseline with beta={params.beta:.4f}, gamma={params.gamma:.4f}")
    return find_factions_and_initiators(flock_dynamic_network(u, params))


def flock_grid_search(
    u: Dataset,
    truth: GroundTruth,
    betas: Sequence[float] = DEFAULT_BETAS,
    gamma_multipliers: Sequence[float] = DEFAULT_GAMMA_MULTIPLIERS,
) -> Tuple[FlockParams, float]:
    """
    Best FLOCK parameters by leadership F1 over a beta × gamma grid, with
    gamma expressed as multiples of the median step length. Ties keep the
    first grid point.
    """
    step = median_step_length(u)
    best: Optional[Tuple[FlockParams, float]] = None

    for beta, multiplier in itertools.product(betas, gamma_multipliers):
        params = FlockParams(beta=beta, gamma=multiplier * step)
        f1 = leadership_f1(flock_timeline(u, params), truth)
        logger.debug(f"beta={beta:.4f} gamma={params.gamma:.4f}: F1={f1:.4f}")
        if best is None or f1 > best[1]:
            best = (params, f1)

    logger.info(f"Best FLOCK parameters: beta={best[0].beta:.4f}, gamma={best[0].gamma:.4f} (F1={best[1]:.4f})")
    return best
