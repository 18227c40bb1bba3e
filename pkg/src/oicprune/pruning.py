"""FLOPs accounting, greedy budgeted channel selection, and surgery.

Selection walks all scored groups in ascending energy order and keeps
removing until the simulated FLOPs of the reduced model drop below
(1 - target) of the ORIGINAL model's FLOPs. No pair may lose more than
half of its channels in a single iteration; when the cap makes the
budget unreachable the maximal capped plan is returned instead of an
error. Surgery physically deletes rows, column blocks, biases and
per-channel affine entries, then re-derives the pair metadata.

FLOPs convention: one multiply-add counts as 2 FLOPs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import SurgeryError
from .importance import OutInChannelGroup, score_all
from .model import Layer, Model

FLOPS_CONVENTION = "1 multiply-add = 2 FLOPs"


@dataclass
class FlopsReport:
    per_layer: list  # (layer index, flops, params)
    total_flops: int
    total_params: int


@dataclass
class PruningPlan:
    iteration: int
    removals: list  # OutInChannelGroup, in removal order
    achieved_flops_ratio: float  # cumulative fraction of original FLOPs removed
    capped_pairs: list = field(default_factory=list)
    predicted_flops: int = 0  # simulated total after applying this plan


def _layer_flops_params(layer, out_shape, oc=None, ic=None):
    if layer.kind == "conv2d":
        w = layer.weight.data
        oc = w.shape[0] if oc is None else oc
        ic = w.shape[1] if ic is None else ic
        kh, kw = w.shape[2], w.shape[3]
        sp = out_shape[1] * out_shape[2]
        flops = 2 * oc * ic * kh * kw * sp
        params = oc * ic * kh * kw + (oc if layer.bias is not None else 0)
    elif layer.kind == "dense":
        w = layer.weight.data
        oc = w.shape[0] if oc is None else oc
        ic = w.shape[1] if ic is None else ic
        flops = 2 * oc * ic
        params = oc * ic + (oc if layer.bias is not None else 0)
    elif layer.kind == "scale_shift":
        flops = 0
        params = layer.weight.data.size + layer.bias.data.size
    else:
        flops = 0
        params = 0
    return flops, params


def count_flops(model: Model) -> FlopsReport:
    per_layer = []
    total_f = 0
    total_p = 0
    for idx, layer in enumerate(model.layers):
        f, p = _layer_flops_params(layer, model.output_shapes[idx])
        per_layer.append((idx, f, p))
        total_f += f
        total_p += p
    return FlopsReport(per_layer, total_f, total_p)


class _FlopsSimulator:
    """Incremental FLOPs of the model under hypothetical channel removal."""

    def __init__(self, model):
        self.model = model
        self.oc = {}
        self.ic = {}
        for idx in model.weighted_layer_indices():
            w = model.layers[idx].weight.data
            self.oc[idx] = w.shape[0]
            self.ic[idx] = w.shape[1]

    def remove(self, pair):
        self.oc[pair.out_layer] -= 1
        self.ic[pair.in_layer] -= pair.in_multiplicity

    def total(self):
        t = 0
        for idx in self.oc:
            f, _ = _layer_flops_params(
                self.model.layers[idx],
                self.model.output_shapes[idx],
                oc=self.oc[idx],
                ic=self.ic[idx],
            )
            t += f
        return t


def select_prune_set(
    model: Model,
    scores: list[OutInChannelGroup],
    target_ratio: float,
    original_flops: int,
    iteration: int = 1,
) -> PruningPlan:
    """Greedy ascending-energy selection under budget and per-pair cap."""
    if not 0.0 <= target_ratio < 1.0:
        raise ValueError(f"target_ratio must be in [0, 1), got {target_ratio}")
    sim = _FlopsSimulator(model)
    current = sim.total()
    if target_ratio == 0.0:
        return PruningPlan(
            iteration, [], 1.0 - current / original_flops, [], current
        )
    budget = (1.0 - target_ratio) * original_flops
    caps = {pid: pair.channel_count // 2 for pid, pair in enumerate(model.pairs)}
    taken = {pid: 0 for pid in caps}
    ordered = sorted(scores, key=lambda g: (g.energy, g.pair_id, g.channel))
    removals = []
    capped = set()
    pos = 0
    while current >= budget:
        while pos < len(ordered) and taken[ordered[pos].pair_id] >= caps[ordered[pos].pair_id]:
            capped.add(ordered[pos].pair_id)
            pos += 1
        if pos == len(ordered):
            break  # budget unreachable under the cap; return the maximal plan
        g = ordered[pos]
        pos += 1
        taken[g.pair_id] += 1
        sim.remove(model.pairs[g.pair_id])
        current = sim.total()
        removals.append(g)
    return PruningPlan(
        iteration,
        removals,
        1.0 - current / original_flops,
        sorted(capped),
        current,
    )


def apply_surgery(model: Model, plan: PruningPlan) -> Model:
    """Physically remove every group in the plan; returns a new model."""
    row_del = {}
    col_del = {}
    affine_del = {}
    bias_del = {}
    for g in plan.removals:
        if g.pair_id >= len(model.pairs):
            raise SurgeryError(f"plan references pair {g.pair_id}, model has {len(model.pairs)}")
        pair = model.pairs[g.pair_id]
        if g.channel >= pair.channel_count:
            raise SurgeryError(
                f"plan removes channel {g.channel} of pair {g.pair_id}, "
                f"which has only {pair.channel_count} channels"
            )
        row_del.setdefault(pair.out_layer, set()).add(g.channel)
        bias_del.setdefault(pair.out_layer, set()).add(g.channel)
        m = pair.in_multiplicity
        in_layer = model.layers[pair.in_layer]
        cols = col_del.setdefault(pair.in_layer, set())
        if in_layer.weight.data.ndim == 4:
            cols.add(g.channel)
        else:
            cols.update(range(g.channel * m, (g.channel + 1) * m))
        for j in pair.intervening:
            if model.layers[j].kind == "scale_shift":
                affine_del.setdefault(j, set()).add(g.channel)

    new_layers = []
    for idx, layer in enumerate(model.layers):
        if layer.kind in ("conv2d", "dense"):
            w = layer.weight.data
            b = layer.bias.data if layer.bias is not None else None
            if idx in row_del:
                keep = sorted(set(range(w.shape[0])) - row_del[idx])
                w = w[keep]
                if b is not None:
                    b = b[sorted(set(range(len(b))) - bias_del[idx])]
            if idx in col_del:
                keep = sorted(set(range(w.shape[1])) - col_del[idx])
                w = w[:, keep]
            new_layers.append(
                Layer(
                    layer.kind,
                    weight=Tensor(w, requires_grad=True),
                    bias=Tensor(b, requires_grad=True) if b is not None else None,
                    stride=layer.stride,
                    padding=layer.padding,
                )
            )
        elif layer.kind == "scale_shift":
            gamma = layer.weight.data
            beta = layer.bias.data
            if idx in affine_del:
                keep = sorted(set(range(len(gamma))) - affine_del[idx])
                gamma = gamma[keep]
                beta = beta[keep]
            new_layers.append(
                Layer(
                    "scale_shift",
                    weight=Tensor(gamma, requires_grad=True),
                    bias=Tensor(beta, requires_grad=True),
                )
            )
        else:
            new_layers.append(
                Layer(layer.kind, stride=layer.stride, pool_size=layer.pool_size)
            )
    return Model(new_layers, model.input_shape)


@dataclass
class IterationReport:
    iteration: int
    plan: PruningPlan
    flops: FlopsReport
    accuracy_after_surgery: float | None = None
    accuracy_after_fine_tune: float | None = None


def prune_loop(
    model: Model,
    targets,
    criterion: str,
    fine_tune=None,
    evaluate=None,
):
    """Iterative global greedy pruning.

    ``targets`` are cumulative FLOPs-removal fractions measured against
    the ORIGINAL model. ``fine_tune(model, iteration)`` retrains in
    place after each surgery (keeping its structured regularizer
    active); ``evaluate(model)`` returns an accuracy for reporting.
    """
    targets = list(targets)
    if any(b < a for a, b in zip(targets, targets[1:])):
        raise ValueError(f"targets must be nondecreasing, got {targets}")
    original = count_flops(model).total_flops
    reports = []
    for t, target in enumerate(targets, start=1):
        scores = score_all(model, criterion)
        plan = select_prune_set(model, scores, target, original, iteration=t)
        model = apply_surgery(model, plan)
        acc_post = evaluate(model) if evaluate is not None else None
        if fine_tune is not None:
            fine_tune(model, t)
        acc_ft = evaluate(model) if evaluate is not None else None
        reports.append(IterationReport(t, plan, count_flops(model), acc_post, acc_ft))
    return model, reports


# ---- report files --------------------------------------------------------


def write_plan_file(plan: PruningPlan, path):
    lines = [
        f"# pruning plan; flops convention: {FLOPS_CONVENTION}",
        "# iteration={} achieved_flops_ratio={!r} predicted_flops={} capped_pairs={}".format(
            plan.iteration,
            plan.achieved_flops_ratio,
            plan.predicted_flops,
            ";".join(str(p) for p in plan.capped_pairs),
        ),
        "iteration,pair_id,channel,energy",
    ]
    for g in plan.removals:
        lines.append(f"{plan.iteration},{g.pair_id},{g.channel},{g.energy!r}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_plan_file(path) -> PruningPlan:
    with open(path) as f:
        lines = [l.rstrip("\n") for l in f]
    meta = {}
    for token in lines[1].lstrip("# ").split():
        k, v = token.split("=", 1)
        meta[k] = v
    removals = []
    for line in lines[3:]:
        if not line:
            continue
        _, pid, ch, en = line.split(",")
        removals.append(OutInChannelGroup(int(pid), int(ch), float(en)))
    capped = [int(p) for p in meta["capped_pairs"].split(";") if p]
    return PruningPlan(
        int(meta["iteration"]),
        removals,
        float(meta["achieved_flops_ratio"]),
        capped,
        int(meta["predicted_flops"]),
    )


def write_flops_csv(report: FlopsReport, path):
    lines = [
        f"# flops convention: {FLOPS_CONVENTION}",
        "layer,flops,params",
    ]
    for idx, f, p in report.per_layer:
        lines.append(f"{idx},{f},{p}")
    lines.append(f"total,{report.total_flops},{report.total_params}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
