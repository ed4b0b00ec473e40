"""Regression trees explaining NE from image characteristics.

Growth picks the split with the largest squared-error reduction: binary splits at
midpoints for the angles, one multiway split for the model id. Reduced-error pruning
then collapses every subtree that does not lower the squared error on a seeded
holdout share of the observations.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .data import iter_trace
from .errors import InvalidInputError

NUMERIC_FEATURES = ("roll", "pitch", "yaw")
CATEGORICAL_FEATURE = "model_id"
FEATURES = NUMERIC_FEATURES + (CATEGORICAL_FEATURE,)
MIN_GAIN = 1e-12


@dataclass(frozen=True)
class Observation:
    roll: float
    pitch: float
    yaw: float
    model_id: int
    target: float


Observations = Union[pd.DataFrame, Sequence[Observation]]


@dataclass(frozen=True, eq=False)
class Node:
    mean: float
    count: int
    feature: Optional[str] = None
    threshold: Optional[float] = None           # numeric: left is x < threshold
    groups: Tuple[FrozenSet[int], ...] = ()     # categorical: categories per child
    default_child: int = 0                      # categorical: unseen categories go here
    children: Tuple["Node", ...] = ()

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def route(self, x: np.ndarray, model_id: int) -> int:
        if self.feature == CATEGORICAL_FEATURE:
            for j, g in enumerate(self.groups):
                if model_id in g:
                    return j
            return self.default_child
        value = x[NUMERIC_FEATURES.index(self.feature)]
        return 0 if value < self.threshold else 1


@dataclass(frozen=True, eq=False)
class RegressionTree:
    root: Node
    min_leaf: int
    categories: FrozenSet[int]

    def nodes(self) -> Iterable[Node]:
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def leaves(self) -> List[Node]:
        return [n for n in self.nodes() if n.is_leaf]

    @property
    def size(self) -> int:
        return sum(1 for _ in self.nodes())

    @property
    def depth(self) -> int:
        def _d(n: Node) -> int:
            return 0 if n.is_leaf else 1 + max(_d(c) for c in n.children)
        return _d(self.root)


# ----------------------------
# Observation tables
# ----------------------------
def as_arrays(observations: Observations) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(observations, pd.DataFrame):
        df = observations
        x = df[list(NUMERIC_FEATURES)].to_numpy(dtype=float)
        m = df[CATEGORICAL_FEATURE].to_numpy(dtype=int)
        y = df["target"].to_numpy(dtype=float)
    else:
        obs = list(observations)
        x = np.array([[o.roll, o.pitch, o.yaw] for o in obs], dtype=float).reshape(-1, 3)
        m = np.array([o.model_id for o in obs], dtype=int)
        y = np.array([o.target for o in obs], dtype=float)
    return x, m, y


def trace_frame(trace_paths: Sequence[str]) -> pd.DataFrame:
    """One row per evaluated test across all traces: angles, model, ne_i and vis_i columns."""
    rows = []
    for path in trace_paths:
        for rec in iter_trace(path):
            if rec.kind != "evaluation":
                continue
            row: Dict[str, float] = {
                "roll": rec.ic.roll, "pitch": rec.ic.pitch, "yaw": rec.ic.yaw,
                "model_id": rec.ic.model_id,
            }
            row.update({f"ne_{i}": v for i, v in enumerate(rec.fitness)})
            row.update({f"vis_{i}": v for i, v in enumerate(rec.visible)})
            rows.append(row)
    return pd.DataFrame(rows)


def observations_for(frame: pd.DataFrame, key_point: int) -> pd.DataFrame:
    """Observations for one key-point; tests where it is invisible carry no NE and are dropped."""
    if frame.empty:
        return pd.DataFrame(columns=list(FEATURES) + ["target"])
    visible = frame[f"vis_{key_point}"].astype(bool)
    out = frame.loc[visible, list(FEATURES)].copy()
    out["target"] = frame.loc[visible, f"ne_{key_point}"].astype(float)
    out["model_id"] = out["model_id"].astype(int)
    return out.reset_index(drop=True)


def observations_from_traces(trace_paths: Sequence[str], key_point: int) -> pd.DataFrame:
    return observations_for(trace_frame(trace_paths), key_point)


# ----------------------------
# Growing
# ----------------------------
def _best_numeric(x: np.ndarray, y: np.ndarray, min_leaf: int) -> Tuple[float, Optional[float]]:
    n = y.size
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order] - y.mean()
    cs, cs2 = np.cumsum(ys), np.cumsum(ys * ys)
    total, total2 = cs[-1], cs2[-1]

    p = np.arange(min_leaf, n - min_leaf + 1)           # size of the left side
    if p.size == 0:
        return 0.0, None
    p = p[xs[p - 1] < xs[p]]
    if p.size == 0:
        return 0.0, None
    left_sse = cs2[p - 1] - cs[p - 1] ** 2 / p
    right_sse = (total2 - cs2[p - 1]) - (total - cs[p - 1]) ** 2 / (n - p)
    parent_sse = total2 - total**2 / n
    gains = parent_sse - left_sse - right_sse
    best = int(np.argmax(gains))
    pos = int(p[best])
    return float(gains[best]), float(0.5 * (xs[pos - 1] + xs[pos]))


def _sse(y: np.ndarray) -> float:
    return float(np.sum((y - y.mean()) ** 2)) if y.size else 0.0


def _best_categorical(m: np.ndarray, y: np.ndarray, min_leaf: int) -> Tuple[float, Tuple[FrozenSet[int], ...]]:
    cats, counts = np.unique(m, return_counts=True)
    big = [(int(c), int(n)) for c, n in zip(cats, counts) if n >= min_leaf]
    small = [int(c) for c, n in zip(cats, counts) if n < min_leaf]
    if not big:
        return 0.0, ()
    groups = [{c} for c, _ in big]
    sizes = [n for _, n in big]
    if small:
        pooled = int(sum(counts[np.isin(cats, small)]))
        if pooled >= min_leaf:
            groups.append(set(small))
            sizes.append(pooled)
        else:
            largest = int(np.argmax(sizes))
            groups[largest] |= set(small)
            sizes[largest] += pooled
    if len(groups) < 2:
        return 0.0, ()
    frozen = tuple(frozenset(g) for g in groups)
    child_sse = sum(_sse(y[np.isin(m, sorted(g))]) for g in frozen)
    return _sse(y) - child_sse, frozen


def _grow(x: np.ndarray, m: np.ndarray, y: np.ndarray, min_leaf: int, depth: int,
          max_depth: Optional[int]) -> Node:
    n = y.size
    node = Node(mean=float(y.mean()), count=n)
    if n < 2 * min_leaf or (max_depth is not None and depth >= max_depth):
        return node

    best_gain, best = MIN_GAIN, None
    for f, name in enumerate(NUMERIC_FEATURES):
        gain, threshold = _best_numeric(x[:, f], y, min_leaf)
        if threshold is not None and gain > best_gain:
            best_gain, best = gain, ("numeric", name, threshold)
    gain, groups = _best_categorical(m, y, min_leaf)
    if groups and gain > best_gain:
        best_gain, best = gain, ("categorical", CATEGORICAL_FEATURE, groups)

    if best is None:
        return node

    kind, name, arg = best
    if kind == "numeric":
        left = x[:, NUMERIC_FEATURES.index(name)] < arg
        masks = [left, ~left]
        return replace(node, feature=name, threshold=arg, children=tuple(
            _grow(x[k], m[k], y[k], min_leaf, depth + 1, max_depth) for k in masks
        ))

    masks = [np.isin(m, sorted(g)) for g in arg]
    sizes = [int(k.sum()) for k in masks]
    return replace(
        node,
        feature=name,
        groups=arg,
        default_child=int(np.argmax(sizes)),
        children=tuple(_grow(x[k], m[k], y[k], min_leaf, depth + 1, max_depth) for k in masks),
    )


# ----------------------------
# Pruning
# ----------------------------
def _child_masks(node: Node, x: np.ndarray, m: np.ndarray) -> List[np.ndarray]:
    if node.feature == CATEGORICAL_FEATURE:
        routed = np.full(m.size, node.default_child)
        for j, g in enumerate(node.groups):
            routed[np.isin(m, sorted(g))] = j
        return [routed == j for j in range(len(node.children))]
    left = x[:, NUMERIC_FEATURES.index(node.feature)] < node.threshold
    return [left, ~left]


def _prune(node: Node, x: np.ndarray, m: np.ndarray, y: np.ndarray) -> Tuple[Node, float]:
    leaf_err = float(np.sum((y - node.mean) ** 2))
    if node.is_leaf:
        return node, leaf_err
    kept, subtree_err = [], 0.0
    for child, k in zip(node.children, _child_masks(node, x, m)):
        pruned, err = _prune(child, x[k], m[k], y[k])
        kept.append(pruned)
        subtree_err += err
    if subtree_err >= leaf_err:
        return Node(mean=node.mean, count=node.count), leaf_err
    return replace(node, children=tuple(kept)), subtree_err


def holdout_split(n: int, prune_fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Sorted (grow, holdout) row indices; the holdout feeds reduced-error pruning."""
    perm = np.random.default_rng(seed).permutation(n)
    n_prune = int(round(n * prune_fraction))
    return np.sort(perm[n_prune:]), np.sort(perm[:n_prune])


def holdout_error(tree: RegressionTree, observations: Observations) -> float:
    """Summed squared error of the tree on the given observations."""
    x, m, y = as_arrays(observations)
    return float(np.sum((predict_many(tree, x, m) - y) ** 2))


# ----------------------------
# Public operations
# ----------------------------
def build_tree(
    observations: Observations,
    min_leaf: int = 40,
    prune_fraction: float = 1.0 / 3.0,
    seed: int = 0,
    categories: Optional[Iterable[int]] = None,
    max_depth: Optional[int] = 32,
) -> RegressionTree:
    x, m, y = as_arrays(observations)
    n = y.size
    if min_leaf < 1:
        raise InvalidInputError(f"min_leaf must be >= 1, got {min_leaf}")
    if n < 2 * min_leaf:
        raise InvalidInputError(f"need at least {2 * min_leaf} observations, got {n}")
    if not 0.0 <= prune_fraction < 1.0:
        raise InvalidInputError(f"prune_fraction must be in [0, 1), got {prune_fraction}")

    universe = frozenset(int(c) for c in (categories if categories is not None else np.unique(m)))
    n_prune = int(round(n * prune_fraction))
    if n_prune == 0 or n - n_prune < 2 * min_leaf:
        root = _grow(x, m, y, min_leaf, 0, max_depth)
        return RegressionTree(root=root, min_leaf=min_leaf, categories=universe)

    grow, hold = holdout_split(n, prune_fraction, seed)
    root = _grow(x[grow], m[grow], y[grow], min_leaf, 0, max_depth)
    root, _ = _prune(root, x[hold], m[hold], y[hold])
    return RegressionTree(root=root, min_leaf=min_leaf, categories=universe)


def predict_tree(tree: RegressionTree, features: Union[Sequence[float], Observation]) -> float:
    """Leaf mean for (roll, pitch, yaw, model_id)."""
    if isinstance(features, Observation):
        features = (features.roll, features.pitch, features.yaw, features.model_id)
    x = np.asarray(features[:3], dtype=float)
    model_id = int(features[3])
    node = tree.root
    while not node.is_leaf:
        node = node.children[node.route(x, model_id)]
    return node.mean


def predict_many(tree: RegressionTree, x: np.ndarray, m: np.ndarray) -> np.ndarray:
    out = np.empty(len(m))

    def _fill(node: Node, idx: np.ndarray) -> None:
        if node.is_leaf or idx.size == 0:
            out[idx] = node.mean
            return
        for child, k in zip(node.children, _child_masks(node, x[idx], m[idx])):
            _fill(child, idx[k])

    _fill(tree.root, np.arange(len(m)))
    return out


def cv_mae(
    observations: Observations,
    folds: int = 10,
    min_leaf: int = 40,
    prune_fraction: float = 1.0 / 3.0,
    seed: int = 0,
) -> float:
    """Mean over folds of the held-out mean absolute error."""
    x, m, y = as_arrays(observations)
    n = y.size
    if folds < 2:
        raise InvalidInputError(f"need at least 2 folds, got {folds}")
    if n < folds or n - int(np.ceil(n / folds)) < 2 * min_leaf:
        raise InvalidInputError(
            f"{n} observations are too few for {folds}-fold CV with min_leaf {min_leaf}"
        )
    universe = np.unique(m)
    parts = np.array_split(np.random.default_rng(seed).permutation(n), folds)
    maes = []
    for f, test in enumerate(parts):
        train = np.sort(np.concatenate([p for j, p in enumerate(parts) if j != f]))
        table = pd.DataFrame({
            "roll": x[train, 0], "pitch": x[train, 1], "yaw": x[train, 2],
            "model_id": m[train], "target": y[train],
        })
        tree = build_tree(table, min_leaf, prune_fraction, seed + f + 1, categories=universe)
        maes.append(float(np.mean(np.abs(predict_many(tree, x[test], m[test]) - y[test]))))
    return float(np.mean(maes))


# ----------------------------
# Rules
# ----------------------------
@dataclass(frozen=True)
class Rule:
    lower: Dict[str, float] = field(default_factory=dict)     # feature >= value
    upper: Dict[str, float] = field(default_factory=dict)     # feature < value
    models: Optional[FrozenSet[int]] = None                   # None: any model
    order: Tuple[str, ...] = ()                               # features in root-to-leaf order
    mean: float = 0.0
    count: int = 0

    def matches(self, roll: float, pitch: float, yaw: float, model_id: int) -> bool:
        values = dict(zip(NUMERIC_FEATURES, (roll, pitch, yaw)))
        if any(values[f] < v for f, v in self.lower.items()):
            return False
        if any(values[f] >= v for f, v in self.upper.items()):
            return False
        return self.models is None or model_id in self.models


def extract_rules(tree: RegressionTree) -> List[Rule]:
    """One rule per leaf, tightest bounds kept, highest mean NE first."""
    rules: List[Rule] = []

    def _walk(node: Node, lower: Dict[str, float], upper: Dict[str, float],
              models: FrozenSet[int], constrained: bool, order: Tuple[str, ...]) -> None:
        if node.is_leaf:
            rules.append(Rule(
                lower=dict(lower), upper=dict(upper),
                models=models if constrained else None,
                order=order, mean=node.mean, count=node.count,
            ))
            return
        name = node.feature
        order_next = order if name in order else order + (name,)
        if name == CATEGORICAL_FEATURE:
            listed = frozenset().union(*node.groups)
            for j, child in enumerate(node.children):
                allowed = node.groups[j] | (models - listed if j == node.default_child else frozenset())
                _walk(child, lower, upper, models & allowed, True, order_next)
            return
        lo_side = dict(upper)
        lo_side[name] = min(upper.get(name, np.inf), node.threshold)
        _walk(node.children[0], lower, lo_side, models, constrained, order_next)
        hi_side = dict(lower)
        hi_side[name] = max(lower.get(name, -np.inf), node.threshold)
        _walk(node.children[1], hi_side, upper, models, constrained, order_next)

    _walk(tree.root, {}, {}, tree.categories, False, ())
    rules.sort(key=lambda r: -r.mean)
    return rules


def tree_size(tree: RegressionTree) -> int:
    return tree.size


def leaf_count(tree: RegressionTree) -> int:
    return len(tree.leaves())
