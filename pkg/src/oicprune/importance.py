"""Channel importance scoring: energies over channel slices.

Energies are computed on weights only (no bias, no affine factors),
except for the scale_magnitude criterion which scores |gamma|.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .model import in_channel_slice, out_channel_slice

CRITERIA = ("out_channel", "out_in_channel", "scale_magnitude")


@dataclass
class OutInChannelGroup:
    pair_id: int
    channel: int
    energy: float


def energy_out_channel(model, pair, i) -> float:
    """Squared L2 norm of the out-channel slice (single-layer statistic)."""
    s = out_channel_slice(model, pair, i)
    return float(np.sum(s * s))


def energy_out_in_channel(model, pair, i) -> float:
    """Squared L2 norm of the joint out-in-channel group."""
    o = out_channel_slice(model, pair, i)
    n = in_channel_slice(model, pair, i)
    return float(np.sum(o * o) + np.sum(n * n))


def _scale_layer_for(model, pair):
    for j in pair.intervening:
        if model.layers[j].kind == "scale_shift":
            return j
    return None


def score_all(model, criterion) -> list[OutInChannelGroup]:
    """One scored group per (pair, channel), ascending (pair_id, channel)."""
    if criterion not in CRITERIA:
        raise ConfigError(f"unknown importance criterion {criterion!r}")
    groups = []
    for pid, pair in enumerate(model.pairs):
        if criterion == "scale_magnitude":
            j = _scale_layer_for(model, pair)
            if j is None:
                raise ConfigError(
                    f"pair {pid} has no scale_shift layer; "
                    "scale_magnitude criterion is not applicable"
                )
            gamma = model.layers[j].weight.data
            for i in range(pair.channel_count):
                groups.append(OutInChannelGroup(pid, i, float(abs(gamma[i]))))
        elif criterion == "out_channel":
            for i in range(pair.channel_count):
                groups.append(OutInChannelGroup(pid, i, energy_out_channel(model, pair, i)))
        else:
            for i in range(pair.channel_count):
                groups.append(
                    OutInChannelGroup(pid, i, energy_out_in_channel(model, pair, i))
                )
    return groups


def write_energy_csv(model, groups, path):
    """Energy dump: pair_id, out_layer, in_layer, channel, energy."""
    lines = ["pair_id,out_layer,in_layer,channel,energy"]
    for g in groups:
        pair = model.pairs[g.pair_id]
        lines.append(
            f"{g.pair_id},{pair.out_layer},{pair.in_layer},{g.channel},{g.energy!r}"
        )
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
