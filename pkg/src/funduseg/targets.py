"""Training-target construction: one-hot region stacks, the 5-channel
edge-integrated stack, and decoding predictions back to disc/cup planes.

The 5-channel stack must be a valid categorical target for a softmax head,
so overlapping planes are resolved one-hot by priority
CupEdge > DiscEdge > CupRegion > DiscRegion > Background.
"""

from pathlib import Path

import numpy as np

from .edges import edges_for_class
from .errors import MalformedPrediction, ShapeMismatch
from .raster import (
    CUP,
    DISC,
    EDGE_STACK_ROLES,
    REGION_ROLES,
    ChannelRole,
    ChannelStack,
    LabelMask,
    read_pgm,
    write_pgm,
)

CHANNEL_SUM_TOL = 1e-4


def one_hot_regions(mask: LabelMask) -> ChannelStack:
    """Re-code labels into [Background, DiscRegion, CupRegion] one-hot planes."""
    lab = mask.labels
    data = np.stack([(lab == 0), (lab == DISC), (lab == CUP)], axis=2)
    return ChannelStack(REGION_ROLES, data.astype(np.float64))


def build_edge_stack(mask: LabelMask) -> ChannelStack:
    """Five-channel edge-integrated target, strictly one-hot at every pixel."""
    lab = mask.labels
    disc_edge = edges_for_class(mask, DISC, include_interior_classes=True)
    cup_edge = edges_for_class(mask, CUP)
    # priority: cup edge > disc edge > cup region > disc region > background
    cup_edge_p = cup_edge == 1
    disc_edge_p = (disc_edge == 1) & ~cup_edge_p
    cup_region = (lab == CUP) & ~cup_edge_p & ~disc_edge_p
    disc_region = (lab == DISC) & ~cup_edge_p & ~disc_edge_p
    background = ~(cup_edge_p | disc_edge_p | cup_region | disc_region)
    data = np.stack([background, disc_region, cup_region, disc_edge_p, cup_edge_p], axis=2)
    return ChannelStack(EDGE_STACK_ROLES, data.astype(np.float64))


def build_target(mask: LabelMask, mode: str) -> ChannelStack:
    """Target stack for a training mode: 'regions' (3-ch) or 'edges' (5-ch)."""
    if mode == "regions":
        return one_hot_regions(mask)
    if mode == "edges":
        return build_edge_stack(mask)
    raise ValueError(f"unknown target mode {mode!r}")


_DISC_ROLES = frozenset(
    {ChannelRole.DISC_REGION, ChannelRole.DISC_EDGE, ChannelRole.CUP_REGION, ChannelRole.CUP_EDGE}
)
_CUP_ROLES = frozenset({ChannelRole.CUP_REGION, ChannelRole.CUP_EDGE})


def decode_prediction(pred: ChannelStack):
    """Per-pixel argmax of a softmax prediction into (disc, cup) binary planes.

    Disc includes cup (the full clinical disc region). Ties break toward the
    lower channel index, which argmax already guarantees.
    """
    sums = pred.data.sum(axis=2)
    dev = np.abs(sums - 1.0).max() if sums.size else 0.0
    if dev > CHANNEL_SUM_TOL:
        raise MalformedPrediction(
            f"channel sums deviate from 1 by up to {dev:.3g} (> {CHANNEL_SUM_TOL:g})"
        )
    winner = pred.data.argmax(axis=2)
    disc_idx = [i for i, r in enumerate(pred.roles) if r in _DISC_ROLES]
    cup_idx = [i for i, r in enumerate(pred.roles) if r in _CUP_ROLES]
    disc = np.isin(winner, disc_idx).astype(np.uint8)
    cup = np.isin(winner, cup_idx).astype(np.uint8)
    return disc, cup


def mask_planes(mask: LabelMask):
    """Ground-truth (disc, cup) planes matching decode_prediction's convention."""
    disc = (mask.labels > 0).astype(np.uint8)  # full disc = disc + cup
    cup = (mask.labels == CUP).astype(np.uint8)
    return disc, cup


# ---------------------------------------------------------------------------
# Stack serialization: one PGM per plane plus a sidecar role list.
# ---------------------------------------------------------------------------

def write_stack(stem, stack: ChannelStack) -> None:
    """Write planes to <stem>.plane{i}.pgm and roles to <stem>.roles.txt."""
    stem = Path(stem)
    for i in range(len(stack.roles)):
        write_pgm(stem.with_name(f"{stem.name}.plane{i}.pgm"), stack.data[:, :, i])
    roles = "".join(r.value + "\n" for r in stack.roles)
    stem.with_name(f"{stem.name}.roles.txt").write_text(roles)


def read_stack(stem) -> ChannelStack:
    stem = Path(stem)
    roles_path = stem.with_name(f"{stem.name}.roles.txt")
    roles = tuple(ChannelRole(line) for line in roles_path.read_text().split())
    planes = [
        read_pgm(stem.with_name(f"{stem.name}.plane{i}.pgm")).plane(0)
        for i in range(len(roles))
    ]
    if len({p.shape for p in planes}) != 1:
        raise ShapeMismatch("stack planes disagree on shape")
    return ChannelStack(roles, np.stack(planes, axis=2))
