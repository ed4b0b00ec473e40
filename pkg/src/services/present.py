from __future__ import annotations

from typing import Any, Dict, FrozenSet, Iterable, List, Optional

import pandas as pd

from src.constants.glossary import COLUMN_LABELS, FEATURE_LABELS

from .errors import InvalidInputError
from .tree import CATEGORICAL_FEATURE, Node, RegressionTree, Rule


def kp_label(index: int) -> str:
    return f"KP{index + 1}"


def parse_key_points(selector: Optional[str], k: int) -> List[int]:
    """'26', '1,3,5-7' or 'KP26' (1-based) to sorted 0-based indices; empty means all."""
    if selector is None or not selector.strip():
        return list(range(k))
    out = set()
    for part in selector.split(","):
        part = part.strip().upper().removeprefix("KP")
        if not part:
            continue
        try:
            if "-" in part:
                a, b = (int(x) for x in part.split("-", 1))
                out.update(range(a, b + 1))
            else:
                out.add(int(part))
        except ValueError:
            raise InvalidInputError(f"bad key-point selector {selector!r}") from None
    bad = sorted(i for i in out if not 1 <= i <= k)
    if bad:
        raise InvalidInputError(f"key-points {bad} outside 1..{k}")
    return sorted(i - 1 for i in out)


def symbol(feature: str) -> str:
    return FEATURE_LABELS.get(feature, (feature, ""))[0]


def fmt_num(v: Any, digits: int = 2) -> str:
    try:
        x = float(v)
    except (TypeError, ValueError):
        return "—"
    if x != x:
        return "—"
    return f"{x:.{digits}f}"


def fmt_models(models: FrozenSet[int], universe: FrozenSet[int]) -> str:
    m = symbol(CATEGORICAL_FEATURE)
    inside = sorted(models)
    outside = sorted(universe - models)
    if len(inside) == 1:
        return f"{m}={inside[0]}"
    if len(outside) == 1:
        return f"{m}≠{outside[0]}"
    if len(outside) < len(inside):
        return f"{m}∉{{{','.join(map(str, outside))}}}"
    return f"{m}∈{{{','.join(map(str, inside))}}}"


def rule_conditions(rule: Rule, universe: FrozenSet[int]) -> List[str]:
    parts: List[str] = []
    for feature in rule.order:
        if feature == CATEGORICAL_FEATURE:
            if rule.models is not None:
                parts.append(fmt_models(rule.models, universe))
            continue
        s = symbol(feature)
        if feature in rule.lower:
            parts.append(f"{s} ≥ {fmt_num(rule.lower[feature])}")
        if feature in rule.upper:
            parts.append(f"{s} < {fmt_num(rule.upper[feature])}")
    return parts


def render_rule(rule: Rule, universe: FrozenSet[int]) -> str:
    cond = " ∧ ".join(rule_conditions(rule, universe)) or "true"
    return f"{cond} → {fmt_num(rule.mean)}"


def rules_frame(rules: Iterable[Rule], universe: FrozenSet[int]) -> pd.DataFrame:
    rows = [
        {
            "condition": " ∧ ".join(rule_conditions(r, universe)) or "true",
            "mean_ne": r.mean,
            "support": r.count,
        }
        for r in rules
    ]
    return pd.DataFrame(rows, columns=["condition", "mean_ne", "support"])


def _split_labels(node: Node, universe: FrozenSet[int]) -> List[str]:
    if node.feature == CATEGORICAL_FEATURE:
        listed = frozenset().union(*node.groups)
        labels = []
        for j, g in enumerate(node.groups):
            members = g | (universe - listed if j == node.default_child else frozenset())
            labels.append(fmt_models(members, universe))
        return labels
    s = symbol(node.feature)
    return [f"{s} < {fmt_num(node.threshold)}", f"{s} ≥ {fmt_num(node.threshold)}"]


def tree_to_text(tree: RegressionTree) -> str:
    lines: List[str] = []

    def _walk(node: Node, depth: int) -> None:
        pad = "|   " * depth
        for label, child in zip(_split_labels(node, tree.categories), node.children):
            if child.is_leaf:
                lines.append(f"{pad}{label} : {fmt_num(child.mean, 4)} ({child.count})")
            else:
                lines.append(f"{pad}{label}")
                _walk(child, depth + 1)

    if tree.root.is_leaf:
        lines.append(f": {fmt_num(tree.root.mean, 4)} ({tree.root.count})")
    else:
        _walk(tree.root, 0)
    lines.append("")
    lines.append(f"Size of the tree : {tree.size}")
    return "\n".join(lines) + "\n"


def tree_to_dict(tree: RegressionTree) -> Dict[str, Any]:
    def _node(node: Node) -> Dict[str, Any]:
        out: Dict[str, Any] = {"mean": node.mean, "count": node.count}
        if node.is_leaf:
            return out
        out["feature"] = node.feature
        if node.feature == CATEGORICAL_FEATURE:
            out["groups"] = [sorted(g) for g in node.groups]
            out["default_child"] = node.default_child
        else:
            out["threshold"] = node.threshold
        out["children"] = [_node(c) for c in node.children]
        return out

    return {
        "min_leaf": tree.min_leaf,
        "categories": sorted(tree.categories),
        "size": tree.size,
        "leaves": len(tree.leaves()),
        "root": _node(tree.root),
    }


def column_help(columns: Iterable[str]) -> Dict[str, Dict[str, str]]:
    """Label and gloss per report column, for the CLI's --help epilog and the API."""
    out: Dict[str, Dict[str, str]] = {}
    for col in columns:
        label, gloss = COLUMN_LABELS.get(col, (col, ""))
        out[col] = {"label": label, "gloss": gloss}
    return out
