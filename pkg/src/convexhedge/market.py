"""Finite market event trees, terminal measures, claims, and randomized tests.

A market is a finite non-recombining tree: each node carries discounted asset
prices, each path from the root ends in a leaf at the common horizon, and the
leaves are in one-to-one correspondence with terminal states. All leaf-indexed
vectors in the package follow one canonical order: leaf ids ascending.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import MarketError


@dataclass
class MarketTree:
    """Validated event tree. Node arrays are sorted by node id; parent and
    children refer to positions in those arrays, not raw ids."""

    node_ids: np.ndarray      # (N,) int, ascending
    parent: np.ndarray        # (N,) int, -1 for the root
    times: np.ndarray         # (N,) int
    prices: np.ndarray        # (N, d) float
    children: list            # (N,) list of child positions
    horizon: int
    leaf_positions: np.ndarray   # positions with time == horizon
    leaf_ids: np.ndarray

    @property
    def n_assets(self):
        return self.prices.shape[1]

    @property
    def n_leaves(self):
        return self.leaf_positions.shape[0]

    def position_of(self, node_id):
        pos = int(np.searchsorted(self.node_ids, node_id))
        if pos >= len(self.node_ids) or self.node_ids[pos] != node_id:
            raise MarketError(f"unknown node id {node_id}")
        return pos

    def path_to_leaf(self, leaf_pos):
        """Positions from the root to the given leaf position, inclusive."""
        path = []
        p = int(leaf_pos)
        while p >= 0:
            path.append(p)
            p = int(self.parent[p])
        return path[::-1]


def build_tree(n_assets, nodes):
    """nodes: iterable of (id, parent_id_or_None, time, prices). Validates the
    tree axioms and returns a MarketTree."""
    entries = list(nodes)
    if not entries:
        raise MarketError("market has no nodes")
    ids = [e[0] for e in entries]
    if len(set(ids)) != len(ids):
        dup = sorted(i for i in set(ids) if ids.count(i) > 1)[0]
        raise MarketError(f"duplicate node id {dup}")
    entries.sort(key=lambda e: e[0])
    node_ids = np.array([e[0] for e in entries], dtype=np.int64)
    times = np.empty(len(entries), dtype=np.int64)
    parent = np.empty(len(entries), dtype=np.int64)
    prices = np.empty((len(entries), n_assets))
    id_to_pos = {int(i): k for k, i in enumerate(node_ids)}
    roots = []
    for k, (nid, par, t, pr) in enumerate(entries):
        times[k] = t
        pr = np.asarray(pr, dtype=float)
        if pr.shape != (n_assets,):
            raise MarketError(f"node {nid}: expected {n_assets} prices, got {pr.shape}")
        if not np.all(np.isfinite(pr)):
            raise MarketError(f"node {nid}: prices must be finite")
        if np.any(pr < 0):
            raise MarketError(f"node {nid}: prices must be nonnegative")
        prices[k] = pr
        if par is None:
            parent[k] = -1
            roots.append(nid)
            if t != 0:
                raise MarketError(f"node {nid}: root must have time 0")
        else:
            if par not in id_to_pos:
                raise MarketError(f"node {nid}: parent {par} does not exist")
            parent[k] = id_to_pos[par]
            if t != times[id_to_pos[par]] + 1:
                raise MarketError(
                    f"node {nid}: time {t} is not parent time + 1")
    if len(roots) != 1:
        raise MarketError(f"expected exactly one root, found {len(roots)}")
    horizon = int(times.max())
    children = [[] for _ in range(len(entries))]
    for k in range(len(entries)):
        if parent[k] >= 0:
            children[int(parent[k])].append(k)
    for k in range(len(entries)):
        if times[k] < horizon and not children[k]:
            raise MarketError(
                f"node {int(node_ids[k])}: interior node has no children")
    leaf_positions = np.flatnonzero(times == horizon)
    return MarketTree(node_ids=node_ids, parent=parent, times=times,
                      prices=prices, children=children, horizon=horizon,
                      leaf_positions=leaf_positions,
                      leaf_ids=node_ids[leaf_positions].copy())


@dataclass(frozen=True)
class TerminalMeasure:
    """Probability vector over leaves in canonical order."""

    probabilities: np.ndarray

    def __post_init__(self):
        p = self.probabilities
        if np.any(p < -1e-12):
            raise MarketError("measure has a negative probability")
        if abs(float(p.sum()) - 1.0) > 1e-9:
            raise MarketError(f"measure sums to {float(p.sum()):.12g}, not 1")


@dataclass(frozen=True)
class Claim:
    """Nonnegative terminal payoff over leaves in canonical order."""

    payoff: np.ndarray

    def __post_init__(self):
        h = self.payoff
        if not np.all(np.isfinite(h)):
            raise MarketError("claim payoff must be finite")
        if np.any(h < 0):
            raise MarketError("claim payoff must be nonnegative")


@dataclass(frozen=True)
class RandomizedTest:
    """Vector with entries in [0, 1] (tolerance 1e-12), one per leaf."""

    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if np.any(v < -1e-12) or np.any(v > 1.0 + 1e-12):
            raise MarketError("test values must lie in [0, 1]")


def expectation(measure, vector):
    """E[vector] under the measure; shapes must agree."""
    p = measure.probabilities
    v = np.asarray(vector, dtype=float)
    if v.shape != p.shape:
        raise MarketError(f"length mismatch: measure {p.shape}, vector {v.shape}")
    return float(p @ v)


def success_ratio(terminal_value, claim):
    """Fraction of the claim covered by the hedge at each leaf: 1 where the
    claim is met (or zero), V/H where it is not. Satisfies
    (phi - 1) H = -(H - V)^+ entrywise for V >= 0."""
    v = np.asarray(terminal_value, dtype=float)
    h = claim.payoff
    if v.shape != h.shape:
        raise MarketError("terminal value and claim lengths differ")
    if np.any(v < -1e-9):
        raise MarketError("terminal value must be nonnegative")
    phi = np.ones_like(h)
    short = (v < h) & (h > 0)
    phi[short] = np.maximum(v[short], 0.0) / h[short]
    return RandomizedTest(values=phi)


def load_market(text):
    """Parse a market JSON document into (MarketTree, TerminalMeasure).

    Schema: {"assets": d, "nodes": [{"id", "parent", "time", "prices"}...],
    "terminal_probabilities": {"<leaf id>": p}}. The reference measure must be
    strictly positive on every leaf.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MarketError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise MarketError("market document must be a JSON object")
    for key in ("assets", "nodes", "terminal_probabilities"):
        if key not in doc:
            raise MarketError(f"missing field {key!r}")
    d = doc["assets"]
    if not isinstance(d, int) or d < 1:
        raise MarketError("assets must be a positive integer")
    nodes = []
    if not isinstance(doc["nodes"], list) or not doc["nodes"]:
        raise MarketError("nodes must be a non-empty list")
    for nd in doc["nodes"]:
        if not isinstance(nd, dict):
            raise MarketError("each node must be an object")
        for key in ("id", "parent", "time", "prices"):
            if key not in nd:
                raise MarketError(f"node missing field {key!r}: {nd}")
        if not isinstance(nd["id"], int):
            raise MarketError(f"node id must be an integer, got {nd['id']!r}")
        if nd["parent"] is not None and not isinstance(nd["parent"], int):
            raise MarketError(f"node {nd['id']}: parent must be an integer or null")
        if not isinstance(nd["time"], int) or nd["time"] < 0:
            raise MarketError(f"node {nd['id']}: time must be a nonnegative integer")
        nodes.append((nd["id"], nd["parent"], nd["time"], nd["prices"]))
    tree = build_tree(d, nodes)
    probs = doc["terminal_probabilities"]
    if not isinstance(probs, dict):
        raise MarketError("terminal_probabilities must be an object")
    given = {}
    for key, val in probs.items():
        try:
            nid = int(key)
        except ValueError:
            raise MarketError(f"terminal probability key {key!r} is not a node id") from None
        given[nid] = float(val)
    missing = [int(i) for i in tree.leaf_ids if int(i) not in given]
    if missing:
        raise MarketError(f"missing terminal probability for leaf {missing[0]}")
    extra = [i for i in given if i not in set(int(j) for j in tree.leaf_ids)]
    if extra:
        raise MarketError(f"terminal probability given for non-leaf node {extra[0]}")
    p = np.array([given[int(i)] for i in tree.leaf_ids])
    if np.any(p <= 0):
        bad = int(tree.leaf_ids[int(np.argmin(p))])
        raise MarketError(
            f"reference measure not strictly positive at leaf {bad}")
    measure = TerminalMeasure(probabilities=p)
    return tree, measure


def load_claim(text, tree):
    """Parse a claim JSON document {"payoff": {"<leaf id>": h}} against a tree."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MarketError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or "payoff" not in doc:
        raise MarketError("claim document must be an object with a 'payoff' field")
    pay = doc["payoff"]
    if not isinstance(pay, dict):
        raise MarketError("payoff must be an object keyed by leaf id")
    given = {}
    for key, val in pay.items():
        try:
            nid = int(key)
        except ValueError:
            raise MarketError(f"payoff key {key!r} is not a node id") from None
        given[nid] = float(val)
    leaf_set = set(int(i) for i in tree.leaf_ids)
    extra = [i for i in given if i not in leaf_set]
    if extra:
        raise MarketError(f"payoff given for non-leaf node {extra[0]}")
    missing = [int(i) for i in tree.leaf_ids if int(i) not in given]
    if missing:
        raise MarketError(f"missing payoff for leaf {missing[0]}")
    h = np.array([given[int(i)] for i in tree.leaf_ids])
    return Claim(payoff=h)
