"""Predicates over small-group counts, e.g. ``S_idle + S_log == 2``.

Names are local state names (when unambiguous) or ``Group.State``.
Expressions may use integer literals, ``+ - *``, comparisons, ``and``,
``or`` and ``not``.
"""

from __future__ import annotations

import ast
import dataclasses
from typing import Sequence

from .statespace import StateLayout
from .syntax import PepaError


class MeasureError(PepaError):
    pass


_ALLOWED = (ast.Expression, ast.BoolOp, ast.And, ast.Or, ast.UnaryOp, ast.Not, ast.USub,
            ast.BinOp, ast.Add, ast.Sub, ast.Mult, ast.Compare, ast.Eq, ast.NotEq,
            ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.Name, ast.Load, ast.Attribute, ast.Constant)


def _resolve(layout: StateLayout, names: dict, node) -> int:
    if isinstance(node, ast.Attribute):
        if not isinstance(node.value, ast.Name):
            raise MeasureError("only Group.State attribute references are allowed")
        key = (node.value.id, node.attr)
        if node.attr not in dict(zip(layout.groups, layout.states)).get(key[0], ()):
            raise MeasureError(f"unknown count {node.value.id}.{node.attr}")
        return layout.index(*key)
    hits = names.get(node.id, [])
    if not hits:
        raise MeasureError(f"unknown count {node.id!r}")
    if len(hits) > 1:
        raise MeasureError(f"{node.id!r} is ambiguous; qualify it with the group label")
    return hits[0]


class _Eval:
    def __init__(self, slots: dict):
        self.slots = slots

    def __call__(self, node, vec):
        if isinstance(node, ast.Expression):
            return self(node.body, vec)
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, (ast.Name, ast.Attribute)):
            return vec[self.slots[id(node)]]
        if isinstance(node, ast.UnaryOp):
            v = self(node.operand, vec)
            return (not v) if isinstance(node.op, ast.Not) else -v
        if isinstance(node, ast.BinOp):
            a, b = self(node.left, vec), self(node.right, vec)
            if isinstance(node.op, ast.Add):
                return a + b
            if isinstance(node.op, ast.Sub):
                return a - b
            return a * b
        if isinstance(node, ast.BoolOp):
            vals = (self(v, vec) for v in node.values)
            return all(vals) if isinstance(node.op, ast.And) else any(vals)
        # comparison chain
        left = self(node.left, vec)
        for op, comp in zip(node.ops, node.comparators):
            right = self(comp, vec)
            ok = {ast.Eq: left == right, ast.NotEq: left != right, ast.Lt: left < right,
                  ast.LtE: left <= right, ast.Gt: left > right, ast.GtE: left >= right}[type(op)]
            if not ok:
                return False
            left = right
        return True


@dataclasses.dataclass(frozen=True)
class Measure:
    name: str
    expression: str

    def compile(self, layout: StateLayout):
        """Return a predicate over state vectors laid out as ``layout``."""
        try:
            tree = ast.parse(self.expression, mode="eval")
        except SyntaxError as exc:
            raise MeasureError(f"measure {self.name!r}: {exc.msg}") from None
        names: dict[str, list[int]] = {}
        for g, states in zip(layout.groups, layout.states):
            for s in states:
                names.setdefault(s, []).append(layout.index(g, s))
        slots = {}
        for node in ast.walk(tree):
            if not isinstance(node, _ALLOWED):
                raise MeasureError(f"measure {self.name!r}: {type(node).__name__} is not allowed")
            if isinstance(node, ast.Constant) and not isinstance(node.value, int):
                raise MeasureError(f"measure {self.name!r}: only integer literals are allowed")
            if isinstance(node, ast.Attribute):
                slots[id(node)] = _resolve(layout, names, node)
            elif isinstance(node, ast.Name) and not _is_attr_base(tree, node):
                slots[id(node)] = _resolve(layout, names, node)
        ev = _Eval(slots)
        return lambda vec: bool(ev(tree, vec))


def _is_attr_base(tree, name) -> bool:
    return any(isinstance(n, ast.Attribute) and n.value is name for n in ast.walk(tree))


def parse_measures(specs: Sequence[str]) -> list[Measure]:
    """Parse ``name=expression`` strings."""
    out = []
    for spec in specs:
        name, sep, expr = spec.partition("=")
        if not sep or not name.strip() or expr.startswith("="):
            raise MeasureError(f"expected name=expression, got {spec!r}")
        out.append(Measure(name.strip(), expr.strip()))
    return out
