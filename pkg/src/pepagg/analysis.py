"""Structural facts about a grouped model.

Group labels, interfaces, cooperation partners, the small/large action
classification, the aggregation condition on large groups and the
reduction of the system equation to its small groups.
"""

from __future__ import annotations

import dataclasses
from typing import Optional

from .syntax import CoopNode, GroupLeaf, GroupedModel, ModelError, SystemEquation, iter_leaves


@dataclasses.dataclass(frozen=True)
class GroupPartition:
    small: frozenset[str]
    large: frozenset[str]

    def __post_init__(self):
        if self.small & self.large:
            raise ModelError(f"groups both small and large: {sorted(self.small & self.large)}")

    def validate(self, model: GroupedModel) -> None:
        labels = group_labels(model)
        if self.small | self.large != labels:
            raise ModelError("partition does not cover exactly the model's groups")


@dataclasses.dataclass(frozen=True)
class ActionClassification:
    large_only: frozenset[str]
    small_only: frozenset[str]
    shared: frozenset[str]

    def as_dict(self) -> dict:
        return {
            "large_only": sorted(self.large_only),
            "small_only": sorted(self.small_only),
            "shared": sorted(self.shared),
        }


@dataclasses.dataclass(frozen=True)
class Violation:
    group: str
    action: str
    state: str


@dataclasses.dataclass(frozen=True)
class ConditionReport:
    violations: tuple[Violation, ...]

    @property
    def satisfied(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        return {
            "satisfied": self.satisfied,
            "violations": [dataclasses.asdict(v) for v in self.violations],
        }


def group_labels(model_or_eq) -> frozenset[str]:
    eq = model_or_eq.equation if isinstance(model_or_eq, GroupedModel) else model_or_eq
    if isinstance(eq, GroupLeaf):
        return frozenset([eq.label])
    return group_labels(eq.left) | group_labels(eq.right)


def _path(eq: SystemEquation, label: str) -> Optional[list[tuple[CoopNode, str]]]:
    """Root-to-leaf path as (node, side) pairs, ``None`` if ``label`` is absent."""
    if isinstance(eq, GroupLeaf):
        return [] if eq.label == label else None
    for side in ("left", "right"):
        rest = _path(getattr(eq, side), label)
        if rest is not None:
            return [(eq, side)] + rest
    return None


def _require_path(model: GroupedModel, label: str):
    path = _path(model.equation, label)
    if path is None:
        raise ModelError(f"unknown group label {label!r}")
    return path


def interface(model: GroupedModel, label: str) -> frozenset[str]:
    """Every cooperation set on the way from the root to group ``label``."""
    acc: frozenset[str] = frozenset()
    for node, _ in _require_path(model, label):
        acc |= node.coop_set
    return acc


def enabled_actions(model: GroupedModel, label: str) -> frozenset[str]:
    return model.component_of(label).actions


def active_interface(model: GroupedModel, label: str) -> frozenset[str]:
    return interface(model, label) & enabled_actions(model, label)


def coop_partners(model: GroupedModel, label: str, action: str) -> frozenset[str]:
    """Groups whose instances synchronise with ``label`` on ``action``."""
    partners: frozenset[str] = frozenset()
    for node, side in _require_path(model, label):
        if action in node.coop_set:
            other = node.right if side == "left" else node.left
            partners |= group_labels(other)
    return partners


def partition_groups(model: GroupedModel, threshold: Optional[int] = None) -> GroupPartition:
    """Size classes from explicit annotations, else from the population threshold.

    A group whose initial population is at most the threshold is small.
    """
    threshold = model.threshold if threshold is None else threshold
    small, large, unknown = set(), set(), []
    for leaf in model.groups:
        cls = model.size_hints.get(leaf.label)
        if cls is None and threshold is not None:
            cls = "small" if leaf.size <= threshold else "large"
        if cls == "small":
            small.add(leaf.label)
        elif cls == "large":
            large.add(leaf.label)
        else:
            unknown.append(leaf.label)
    if unknown:
        raise ModelError(f"no size class for group(s) {', '.join(unknown)}; annotate them or give a threshold")
    return GroupPartition(frozenset(small), frozenset(large))


def _class_actions(model: GroupedModel, labels, other: frozenset[str]) -> set[str]:
    out = set()
    for h in labels:
        iface = interface(model, h)
        for a in enabled_actions(model, h):
            if a not in iface or not (coop_partners(model, h, a) & other):
                out.add(a)
    return out


def classify(model: GroupedModel, partition: GroupPartition) -> ActionClassification:
    """Split the enabled action types into large-only, small-only and shared.

    An action that would land in more than one class (for example done
    individually by a small group and by a large group) is put in ``shared``:
    it can change both the small and the large part of a state.
    """
    partition.validate(model)
    large_only = _class_actions(model, partition.large, partition.small)
    small_only = _class_actions(model, partition.small, partition.large)
    shared = set()
    for h in partition.small:
        for a in active_interface(model, h):
            if coop_partners(model, h, a) & partition.large:
                shared.add(a)
    for h in partition.large:
        for a in active_interface(model, h):
            if coop_partners(model, h, a) & partition.small:
                shared.add(a)
    overlap = large_only & small_only
    shared |= overlap
    large_only -= shared
    small_only -= shared
    return ActionClassification(frozenset(large_only), frozenset(small_only), frozenset(shared))


def check_aggregation_condition(model: GroupedModel, partition: GroupPartition,
                                strict: bool = False) -> ConditionReport:
    """Shared activities between large and small groups must be passive on the large side.

    By default a large-group local state that does not enable the action is
    compliant. ``strict=True`` demands a passive offer from every local state.
    """
    partition.validate(model)
    violations = []
    for leaf in model.groups:
        if leaf.label not in partition.large:
            continue
        comp = model.components[leaf.component]
        for a in sorted(active_interface(model, leaf.label)):
            if not coop_partners(model, leaf.label, a) & partition.small:
                continue
            for s in comp.states:
                offers = [t.rate for t in comp.outgoing(s) if t.action == a]
                if offers:
                    if any(not r.passive for r in offers):
                        violations.append(Violation(leaf.label, a, s))
                elif strict:
                    violations.append(Violation(leaf.label, a, s))
    return ConditionReport(tuple(violations))


_NIL = None


def _alphabet(eq: SystemEquation, components) -> frozenset[str]:
    return frozenset().union(*(components[l.component].actions for l in iter_leaves(eq)))


def _reduce_eq(eq: SystemEquation, small: frozenset[str], components):
    if isinstance(eq, GroupLeaf):
        return eq if eq.label in small else _NIL
    left = _reduce_eq(eq.left, small, components)
    right = _reduce_eq(eq.right, small, components)
    if left is _NIL:
        return right
    if right is _NIL:
        return left
    # an action whose only partners on one side were large groups becomes
    # independent; blocking already present in the original is kept
    lost = set()
    for before, after in ((eq.left, left), (eq.right, right)):
        lost |= _alphabet(before, components) - _alphabet(after, components)
    return CoopNode(left, right, eq.coop_set - lost)


def reduce(model: GroupedModel, partition: GroupPartition) -> GroupedModel:
    """Drop the large groups from the system equation and eliminate Nil."""
    partition.validate(model)
    eq = _reduce_eq(model.equation, partition.small, model.components)
    if eq is _NIL:
        raise ModelError("reduction leaves no small group (the reduced model would be Nil)")
    used = {leaf.component for leaf in iter_leaves(eq)}
    components = {k: v for k, v in model.components.items() if k in used}
    kept = group_labels(eq)
    hints = {k: "small" for k in kept}
    return dataclasses.replace(model, components=components, equation=eq,
                               size_hints=hints, threshold=None)
