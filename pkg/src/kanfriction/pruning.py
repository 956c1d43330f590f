"""Attribution scores and bottom-up pruning (nodes, then edges, then inputs)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, OverPrunedError
from .network import KanNetwork, forward_cached

DEFAULT_NODE_THRESHOLD = 1e-2
DEFAULT_EDGE_THRESHOLD = 3e-2
DEFAULT_INPUT_THRESHOLD = 1e-2


@dataclass
class AttributionScores:
    edge_scores: list  # per layer, (l_o, l_i)
    node_scores: list  # per node-layer, (n_nodes,)
    edge_activity: list

    def normalized_edges(self, l: int) -> np.ndarray:
        return _normalize(self.edge_scores[l])

    def normalized_nodes(self, k: int) -> np.ndarray:
        return _normalize(self.node_scores[k])


@dataclass
class PruneConfig:
    node_threshold: float = DEFAULT_NODE_THRESHOLD
    edge_threshold: float = DEFAULT_EDGE_THRESHOLD

    def __post_init__(self):
        if self.node_threshold < 0 or self.edge_threshold < 0:
            raise InvalidArgument("pruning thresholds must be non-negative")


def _normalize(s):
    top = np.max(s) if s.size else 0.0
    return s / top if top > 0 else np.zeros_like(s)


def _inputs(net, data):
    v = data.velocities if hasattr(data, "velocities") else data[0]
    if len(v) == 0:
        raise InvalidArgument("attribution scores need a non-empty dataset")
    return net.check_input(v)


def attribution_scores(net: KanNetwork, data) -> AttributionScores:
    """Edge activity is the batch standard deviation of each masked edge output.

    Scores flow top-down from output nodes (score 1): an additive node splits
    its score over incoming edges in proportion to their activity, a
    multiplicative node hands its full score to both of its factor slots, and
    a node's own score is the sum over its outgoing edges.
    """
    fc = forward_cached(net, _inputs(net, data))
    # constant edges get exactly 0 (np.std leaves rounding residue)
    activity = [np.where(np.ptp(c.edges, axis=0) > 0, np.std(c.edges, axis=0), 0.0) for c in fc.layer_caches]
    L = net.arch.depth
    node_scores = [None] * (L + 1)
    edge_scores = [None] * L
    node_scores[L] = np.ones(net.arch.n_nodes(L))
    for l in range(L - 1, -1, -1):
        n_add, n_mul = net.arch.layers[l + 1]
        s = node_scores[l + 1]
        slot_scores = np.concatenate([s[:n_add], np.repeat(s[n_add:], 2)])
        a = activity[l]
        total = a.sum(axis=1, keepdims=True)
        share = np.divide(a, total, out=np.zeros_like(a), where=total > 0)
        edge_scores[l] = slot_scores[:, None] * share
        node_scores[l] = edge_scores[l].sum(axis=0) * net.node_masks[l]
    return AttributionScores(edge_scores, node_scores, activity)


def reachable_outputs(net: KanNetwork) -> np.ndarray:
    """Boolean per output: is there an active path from some live input?"""
    alive = net.node_masks[0] > 0
    for l in range(net.arch.depth):
        eff = net.effective_mask(l) > 0
        slot_alive = (eff & alive[None, :]).any(axis=1)
        n_add, n_mul = net.arch.layers[l + 1]
        prods = slot_alive[n_add::2][:n_mul] & slot_alive[n_add + 1::2][:n_mul]
        alive = np.concatenate([slot_alive[:n_add], prods]) & (net.node_masks[l + 1] > 0)
    return alive


def _pruned_inputs(net):
    eff = net.effective_mask(0)
    return [int(j) for j in range(net.n_inputs) if not eff[:, j].any()]


def prune_report(net: KanNetwork, scores: AttributionScores, thresholds: dict) -> dict:
    layers = []
    for l in range(net.arch.depth):
        eff = net.effective_mask(l)
        layers.append({
            "layer": l,
            "surviving_edges": [[int(i), int(j)] for i, j in zip(*np.nonzero(eff))],
            "edge_scores": scores.normalized_edges(l).tolist(),
        })
    nodes = []
    for k in range(net.arch.depth + 1):
        nodes.append({
            "node_layer": k,
            "surviving_nodes": [int(i) for i in np.flatnonzero(net.node_masks[k])],
            "node_scores": scores.normalized_nodes(k).tolist(),
        })
    return {
        "thresholds": thresholds,
        "layers": layers,
        "nodes": nodes,
        "pruned_inputs": _pruned_inputs(net),
    }


def prune(net: KanNetwork, data, config: PruneConfig | None = None, scores=None):
    """Node pruning, re-scoring, then edge pruning. Returns ``(new_net, report)``.

    The input network is not modified. Raises :class:`OverPrunedError` if
    any output loses every path to the inputs.
    """
    config = config or PruneConfig()
    if scores is None:
        scores = attribution_scores(net, data)
    new = net.copy()
    for k in range(1, new.arch.depth):
        weak = scores.normalized_nodes(k) < config.node_threshold
        new.node_masks[k] = np.where(weak, 0.0, new.node_masks[k])

    rescored = attribution_scores(new, data)
    for l in range(new.arch.depth):
        weak = rescored.normalized_edges(l) < config.edge_threshold
        new.layers[l].edge_mask = np.where(weak, 0.0, new.layers[l].edge_mask)

    if not reachable_outputs(new).all():
        raise OverPrunedError(
            f"pruning with node threshold {config.node_threshold} and edge threshold "
            f"{config.edge_threshold} disconnects the output; lower the thresholds")
    final = attribution_scores(new, data)
    report = prune_report(new, final, {
        "node": config.node_threshold, "edge": config.edge_threshold})
    return new, report


def prune_inputs(net: KanNetwork, scores: AttributionScores, threshold: float = DEFAULT_INPUT_THRESHOLD):
    """Mask input variables whose normalized score falls below ``threshold``."""
    if threshold < 0:
        raise InvalidArgument("input threshold must be non-negative")
    new = net.copy()
    weak = scores.normalized_nodes(0) < threshold
    removed = [int(j) for j in np.flatnonzero(weak & (new.node_masks[0] > 0))]
    for j in removed:
        new.node_masks[0][j] = 0.0
        new.layers[0].edge_mask[:, j] = 0.0
    if not reachable_outputs(new).all():
        raise OverPrunedError(f"input threshold {threshold} removes every input; lower it")
    return new, {"threshold": threshold, "removed_inputs": removed,
                 "input_scores": scores.normalized_nodes(0).tolist()}
