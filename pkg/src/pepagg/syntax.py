"""Grouped PEPA models: data types, the text parser and the pretty-printer.

The accepted file format::

    rates { r_t = 15.0; r_s = 10.0; r_c = T; }
    C_think = (think, r_t).C_req;
    C_req   = (req, T).C_think;
    S_idle  = (req, r_s).S_log + (brk, r_b).S_broken;
    system  = Servers{ S_idle[5] } <req> Clients{ C_think[100] };
    small Servers; large Clients;

Cooperation operators are ``<a, b>``, ``<>`` or ``||`` (empty set). A group
leaf is ``Label{ P[n] || Q[m] }`` and an equation may name another equation
constant (``Sys = ...; system = Sys;``). Passive rates are ``T`` or ``w*T``.
Comments run from ``//`` or ``#`` to the end of the line.
"""

from __future__ import annotations

import dataclasses
import re
import warnings
from collections import OrderedDict
from typing import Iterator, Mapping, Optional, Union


class PepaError(Exception):
    """Base class of every error raised by this package."""


class PepaSyntaxError(PepaError):
    def __init__(self, message: str, line: int, column: int, expected=()):
        self.line = line
        self.column = column
        self.expected = tuple(expected)
        text = f"{line}:{column}: {message}"
        if self.expected:
            text += f" (expected {', '.join(self.expected)})"
        super().__init__(text)


class ModelError(PepaError):
    """A well-formed file that does not describe a valid grouped model."""


class ModelWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# Rates and sequential components


@dataclasses.dataclass(frozen=True)
class RateExpr:
    """An activity rate: ``Active(value)`` or ``Passive(weight)``."""

    passive: bool
    value: float

    def __post_init__(self):
        if self.passive:
            if self.value < 1 or int(self.value) != self.value:
                raise ModelError(f"passive weight must be a positive integer, got {self.value}")
        elif not self.value > 0:
            raise ModelError(f"rate must be positive, got {self.value}")

    @classmethod
    def active(cls, value: float) -> "RateExpr":
        return cls(False, float(value))

    @classmethod
    def top(cls, weight: int = 1) -> "RateExpr":
        return cls(True, int(weight))

    @property
    def weight(self) -> int:
        return int(self.value)

    def __add__(self, other: "RateExpr") -> "RateExpr":
        if self.passive != other.passive:
            raise ModelError("cannot add an active rate to a passive one")
        if self.passive:
            return RateExpr.top(self.weight + other.weight)
        return RateExpr.active(self.value + other.value)

    def __str__(self) -> str:
        if self.passive:
            return "T" if self.weight == 1 else f"{self.weight}*T"
        return repr(self.value)


@dataclasses.dataclass(frozen=True)
class Transition:
    source: str
    action: str
    rate: RateExpr
    target: str


@dataclasses.dataclass(frozen=True)
class SequentialComponent:
    """A local automaton: the derivative set of a component and its moves.

    ``states`` is ordered by definition order in the source file and
    ``transitions`` by (source position, definition order).
    """

    name: str
    states: tuple[str, ...]
    transitions: tuple[Transition, ...]

    def index(self, state: str) -> int:
        return self.states.index(state)

    def outgoing(self, state: str) -> tuple[Transition, ...]:
        return tuple(t for t in self.transitions if t.source == state)

    @property
    def actions(self) -> frozenset[str]:
        return frozenset(t.action for t in self.transitions)

    def is_passive(self, action: str) -> Optional[bool]:
        """Passivity of ``action`` in this component, ``None`` if never enabled."""
        for t in self.transitions:
            if t.action == action:
                return t.rate.passive
        return None


# ---------------------------------------------------------------------------
# System equations


@dataclasses.dataclass(frozen=True)
class GroupLeaf:
    label: str
    component: str
    initial_counts: tuple[tuple[str, int], ...]

    @property
    def size(self) -> int:
        return sum(n for _, n in self.initial_counts)


@dataclasses.dataclass(frozen=True)
class CoopNode:
    left: "SystemEquation"
    right: "SystemEquation"
    coop_set: frozenset[str]


SystemEquation = Union[GroupLeaf, CoopNode]


def iter_leaves(eq: SystemEquation) -> Iterator[GroupLeaf]:
    if isinstance(eq, GroupLeaf):
        yield eq
    else:
        yield from iter_leaves(eq.left)
        yield from iter_leaves(eq.right)


@dataclasses.dataclass(frozen=True)
class GroupedModel:
    components: Mapping[str, SequentialComponent]
    equation: SystemEquation
    rates: Mapping[str, RateExpr] = dataclasses.field(default_factory=dict)
    size_hints: Mapping[str, str] = dataclasses.field(default_factory=dict)
    threshold: Optional[int] = None
    # raw definitions, kept so rate overrides can rebuild the model
    definitions: tuple = dataclasses.field(default=(), compare=False, repr=False)

    @property
    def groups(self) -> tuple[GroupLeaf, ...]:
        return tuple(iter_leaves(self.equation))

    def group(self, label: str) -> GroupLeaf:
        for leaf in iter_leaves(self.equation):
            if leaf.label == label:
                return leaf
        raise ModelError(f"unknown group label {label!r}")

    def component_of(self, label: str) -> SequentialComponent:
        return self.components[self.group(label).component]

    def with_rates(self, overrides: Mapping[str, float]) -> "GroupedModel":
        """Rebuild the model with some named rates replaced."""
        unknown = set(overrides) - set(self.rates)
        if unknown:
            raise ModelError(f"no rate constant named {', '.join(sorted(unknown))}")
        rates = dict(self.rates)
        for name, value in overrides.items():
            rates[name] = value if isinstance(value, RateExpr) else RateExpr.active(value)
        return _build(self.definitions, rates, self.equation, self.size_hints, self.threshold)

    def with_populations(self, sizes: Mapping[str, int]) -> "GroupedModel":
        """Resize groups that start with all members in one local state."""
        unknown = set(sizes) - {leaf.label for leaf in self.groups}
        if unknown:
            raise ModelError(f"unknown group label(s) {', '.join(sorted(unknown))}")

        def resize(eq):
            if isinstance(eq, CoopNode):
                return CoopNode(resize(eq.left), resize(eq.right), eq.coop_set)
            if eq.label not in sizes:
                return eq
            starts = [s for s, n in eq.initial_counts if n > 0]
            if len(starts) != 1:
                raise ModelError(f"group {eq.label} does not start in a single local state")
            if sizes[eq.label] < 1:
                raise ModelError(f"group {eq.label} needs at least one member")
            return GroupLeaf(eq.label, eq.component, ((starts[0], int(sizes[eq.label])),))

        return dataclasses.replace(self, equation=resize(self.equation))


# ---------------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>(?://|\#)[^\n]*)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<op>\|\||<>|[(){}\[\]<>,;.+*=])
    """,
    re.VERBOSE,
)


@dataclasses.dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise PepaSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            tokens.append(_Token(kind, m.group(), line, pos - line_start + 1))
        chunk = m.group()
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = pos + chunk.rfind("\n") + 1
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


# ---------------------------------------------------------------------------
# Parser (recursive descent)

_KEYWORDS = {"rates", "system", "small", "large", "threshold", "T"}


@dataclasses.dataclass(frozen=True)
class _Prefix:
    action: str
    rate: object  # RateExpr or constant name
    target: str
    line: int
    column: int


@dataclasses.dataclass(frozen=True)
class _EqRef:
    name: str
    line: int
    column: int


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.pos]

    def peek(self, k: int = 1) -> _Token:
        return self.tokens[min(self.pos + k, len(self.tokens) - 1)]

    def error(self, message: str, expected=()) -> PepaSyntaxError:
        t = self.tok
        found = "end of input" if t.kind == "eof" else repr(t.text)
        return PepaSyntaxError(f"{message}, found {found}", t.line, t.column, expected)

    def accept(self, text: str) -> Optional[_Token]:
        if self.tok.kind in ("op", "ident") and self.tok.text == text:
            t = self.tok
            self.pos += 1
            return t
        return None

    def expect(self, text: str) -> _Token:
        t = self.accept(text)
        if t is None:
            raise self.error("unexpected token", [repr(text)])
        return t

    def ident(self, what: str = "identifier") -> _Token:
        t = self.tok
        if t.kind != "ident" or t.text in _KEYWORDS:
            raise self.error(f"expected {what}", [what])
        self.pos += 1
        return t

    def number(self) -> float:
        t = self.tok
        if t.kind != "number":
            raise self.error("expected a number", ["number"])
        self.pos += 1
        return float(t.text)

    # -- top level -----------------------------------------------------------

    def parse(self):
        rates: dict[str, tuple[RateExpr, _Token]] = OrderedDict()
        seq_defs: dict[str, tuple[list[_Prefix], _Token]] = OrderedDict()
        eq_defs: dict[str, tuple[object, _Token]] = OrderedDict()
        hints: dict[str, str] = {}
        threshold = None
        system = None
        while self.tok.kind != "eof":
            t = self.tok
            if self.accept("rates"):
                self.expect("{")
                while not self.accept("}"):
                    name = self.ident("rate name")
                    self.expect("=")
                    value = self.rate_literal()
                    self.expect(";")
                    if name.text in rates:
                        raise PepaSyntaxError(f"rate {name.text!r} defined twice", name.line, name.column)
                    rates[name.text] = (value, name)
            elif self.accept("small") or self.accept("large"):
                cls = t.text
                while True:
                    label = self.ident("group label")
                    if label.text in hints and hints[label.text] != cls:
                        raise PepaSyntaxError(f"group {label.text!r} marked both small and large",
                                              label.line, label.column)
                    hints[label.text] = cls
                    if not self.accept(","):
                        break
                self.expect(";")
            elif self.accept("threshold"):
                self.accept("=")
                threshold = int(self.number())
                self.expect(";")
            elif self.accept("system"):
                self.expect("=")
                if system is not None:
                    raise PepaSyntaxError("system equation defined twice", t.line, t.column)
                system = self.equation()
                self.expect(";")
            else:
                name = self.ident("definition name or keyword")
                self.expect("=")
                if name.text in seq_defs or name.text in eq_defs:
                    raise PepaSyntaxError(f"constant {name.text!r} defined twice", name.line, name.column)
                if self.looks_like_prefix():
                    seq_defs[name.text] = (self.choice(), name)
                else:
                    eq_defs[name.text] = (self.equation(), name)
                self.expect(";")
        if system is None:
            raise self.error("missing system equation", ["'system = ...;'"])
        return rates, seq_defs, eq_defs, system, hints, threshold

    def looks_like_prefix(self) -> bool:
        return self.tok.text == "(" and self.peek(1).kind == "ident" and self.peek(2).text == ","

    # -- rates ---------------------------------------------------------------

    def rate_literal(self) -> RateExpr:
        t = self.tok
        try:
            if self.accept("T"):
                return RateExpr.top()
            value = self.number()
            if self.accept("*"):
                self.expect("T")
                if value != int(value):
                    raise ModelError("passive weight must be an integer")
                return RateExpr.top(int(value))
            return RateExpr.active(value)
        except ModelError as exc:
            raise PepaSyntaxError(str(exc), t.line, t.column) from None

    def rate(self):
        if self.tok.kind == "ident" and self.tok.text != "T":
            return self.ident("rate").text
        return self.rate_literal()

    # -- sequential components ----------------------------------------------

    def choice(self) -> list[_Prefix]:
        prefixes = [self.prefix()]
        while self.accept("+"):
            prefixes.append(self.prefix())
        return prefixes

    def prefix(self) -> _Prefix:
        start = self.expect("(")
        action = self.ident("action type").text
        self.expect(",")
        rate = self.rate()
        self.expect(")")
        self.expect(".")
        target = self.ident("process constant").text
        return _Prefix(action, rate, target, start.line, start.column)

    # -- system equations ----------------------------------------------------

    def equation(self):
        left = self.coop_term()
        while True:
            if self.accept("||") or self.accept("<>"):
                coop = frozenset()
            elif self.accept("<"):
                names = []
                if not self.accept(">"):
                    names.append(self.ident("action type").text)
                    while self.accept(","):
                        names.append(self.ident("action type").text)
                    self.expect(">")
                coop = frozenset(names)
            else:
                return left
            right = self.coop_term()
            left = ("coop", left, right, coop)

    def coop_term(self):
        if self.accept("("):
            eq = self.equation()
            self.expect(")")
            return eq
        name = self.ident("group label or equation constant")
        if not self.accept("{"):
            return _EqRef(name.text, name.line, name.column)
        parts = []
        while True:
            proc = self.ident("process constant")
            count = 1
            if self.accept("["):
                tok = self.tok
                count = self.number()
                if count != int(count) or count < 0:
                    raise PepaSyntaxError("population must be a nonnegative integer", tok.line, tok.column)
                count = int(count)
                self.expect("]")
            parts.append((proc.text, count, proc))
            if not self.accept("||"):
                break
        self.expect("}")
        return ("group", name, parts)


# ---------------------------------------------------------------------------
# Resolution


def _resolve_rate(rate, rates: Mapping[str, RateExpr], where: _Prefix) -> RateExpr:
    if isinstance(rate, RateExpr):
        return rate
    if rate not in rates:
        raise ModelError(f"{where.line}:{where.column}: undefined rate constant {rate!r}")
    return rates[rate]


def _closure(start: list[str], defs: Mapping[str, list[_Prefix]]) -> list[str]:
    seen = []
    stack = list(reversed(start))
    while stack:
        s = stack.pop()
        if s in seen:
            continue
        seen.append(s)
        for p in reversed(defs[s]):
            if p.target not in seen:
                stack.append(p.target)
    return seen


def _make_component(name, initial, defs, rates, order) -> SequentialComponent:
    states = _closure(initial, defs)
    states.sort(key=order.index)
    merged: "OrderedDict[tuple[str, str, str], RateExpr]" = OrderedDict()
    for s in states:
        for p in defs[s]:
            r = _resolve_rate(p.rate, rates, p)
            key = (s, p.action, p.target)
            merged[key] = merged[key] + r if key in merged else r
    passivity: dict[str, bool] = {}
    for (s, a, _), r in merged.items():
        if passivity.setdefault(a, r.passive) != r.passive:
            raise ModelError(
                f"component {name!r} offers {a!r} both actively and passively")
    transitions = tuple(Transition(s, a, r, t) for (s, a, t), r in merged.items())
    return SequentialComponent(name, tuple(states), transitions)


def _build(definitions, rates, system, hints, threshold) -> GroupedModel:
    seq_defs, eq_defs = definitions
    order = list(seq_defs)
    for name, prefixes in seq_defs.items():
        for p in prefixes:
            if p.target not in seq_defs:
                raise ModelError(f"{p.line}:{p.column}: undefined process constant {p.target!r}")

    components: dict[str, SequentialComponent] = {}
    labels: set[str] = set()

    def resolve(node, expanding=()):
        if isinstance(node, (GroupLeaf, CoopNode)):
            # already resolved (rebuilding with new rates)
            if isinstance(node, CoopNode):
                return CoopNode(resolve(node.left), resolve(node.right), node.coop_set)
            node = ("group", node.label, [(s, n, None) for s, n in node.initial_counts])
        if isinstance(node, _EqRef):
            if node.name not in eq_defs:
                raise ModelError(f"{node.line}:{node.column}: undefined equation constant {node.name!r}")
            if node.name in expanding:
                raise ModelError(f"recursive equation constant {node.name!r}")
            return resolve(eq_defs[node.name], expanding + (node.name,))
        if node[0] == "coop":
            _, left, right, coop = node
            return CoopNode(resolve(left, expanding), resolve(right, expanding), coop)
        _, label_tok, parts = node
        label = label_tok if isinstance(label_tok, str) else label_tok.text
        if label in labels:
            raise ModelError(f"duplicate group label {label!r}")
        labels.add(label)
        for proc, _, tok in parts:
            if proc not in seq_defs:
                where = f"{tok.line}:{tok.column}: " if tok is not None else ""
                raise ModelError(f"{where}undefined process constant {proc!r}")
        first = parts[0][0]
        home = _closure([first], seq_defs)
        for proc, _, _ in parts:
            if proc not in home:
                raise ModelError(f"group {label!r} is not simple: {proc!r} is not a derivative of {first!r}")
        comp = _make_component(first, [first], seq_defs, rates, order)
        if comp.name in components and components[comp.name] != comp:
            raise ModelError(f"inconsistent component {comp.name!r}")
        components[comp.name] = comp
        counts: dict[str, int] = {}
        for proc, n, _ in parts:
            counts[proc] = counts.get(proc, 0) + n
        if sum(counts.values()) < 1:
            raise ModelError(f"group {label!r} is empty")
        ordered = tuple((s, counts[s]) for s in comp.states if s in counts)
        return GroupLeaf(label, comp.name, ordered)

    equation = resolve(system)
    for label in hints:
        if label not in labels:
            raise ModelError(f"size annotation for unknown group {label!r}")
    model = GroupedModel(components, equation, dict(rates), dict(hints), threshold, definitions)
    _check_passive_completeness(model)
    _check_inert_cooperation(model.equation, components)
    used = {s for c in components.values() for s in c.states}
    unused = [s for s in order if s not in used]
    if unused:
        warnings.warn(f"definitions never visited by any group: {', '.join(unused)}", ModelWarning, stacklevel=3)
    return model


def _check_passive_completeness(model: GroupedModel) -> None:
    def walk(eq, scope: frozenset[str]):
        if isinstance(eq, CoopNode):
            inner = scope | eq.coop_set
            walk(eq.left, inner)
            walk(eq.right, inner)
            return
        comp = model.components[eq.component]
        for t in comp.transitions:
            if t.rate.passive and t.action not in scope:
                raise ModelError(
                    f"passive activity {t.action!r} of group {eq.label!r} is not in any enclosing "
                    f"cooperation set (incomplete model)")

    walk(model.equation, frozenset())


def _enabled(eq: SystemEquation, components) -> frozenset[str]:
    return frozenset().union(*(components[l.component].actions for l in iter_leaves(eq)))


def _check_inert_cooperation(eq: SystemEquation, components) -> None:
    if isinstance(eq, GroupLeaf):
        return
    inert = eq.coop_set - (_enabled(eq.left, components) | _enabled(eq.right, components))
    if inert:
        warnings.warn(f"cooperation set names action types enabled by neither side: "
                      f"{', '.join(sorted(inert))}", ModelWarning, stacklevel=4)
    _check_inert_cooperation(eq.left, components)
    _check_inert_cooperation(eq.right, components)


def parse_model(text: str) -> GroupedModel:
    """Parse the text of a grouped PEPA model into a resolved model."""
    rates_raw, seq_raw, eq_raw, system, hints, threshold = _Parser(text).parse()
    rates = {k: v for k, (v, _) in rates_raw.items()}
    seq_defs = OrderedDict((k, v) for k, (v, _) in seq_raw.items())
    eq_defs = {k: v for k, (v, _) in eq_raw.items()}
    return _build((seq_defs, eq_defs), rates, system, hints, threshold)


def load_model(path) -> GroupedModel:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


def local_automaton(model: GroupedModel, name: str) -> SequentialComponent:
    """Derivative-set closure of the component whose initial state is ``name``."""
    if name in model.components:
        return model.components[name]
    seq_defs, _ = model.definitions
    if name not in seq_defs:
        raise ModelError(f"undefined process constant {name!r}")
    return _make_component(name, [name], seq_defs, model.rates, list(seq_defs))


# ---------------------------------------------------------------------------
# Pretty-printing


def format_equation(eq: SystemEquation, top: bool = True) -> str:
    if isinstance(eq, GroupLeaf):
        body = " || ".join(f"{s}[{n}]" for s, n in eq.initial_counts)
        return f"{eq.label}{{{body}}}"
    op = f"<{', '.join(sorted(eq.coop_set))}>" if eq.coop_set else "||"
    text = f"{format_equation(eq.left, False)} {op} {format_equation(eq.right, False)}"
    return text if top else f"({text})"


def format_model(model: GroupedModel) -> str:
    """Render a model in the accepted file format.

    Rates are written as literals so the output stands alone.
    """
    lines = []
    if model.rates:
        body = " ".join(f"{k} = {v};" for k, v in model.rates.items())
        lines.append(f"rates {{ {body} }}")
    for comp in model.components.values():
        for s in comp.states:
            alts = " + ".join(f"({t.action}, {t.rate}).{t.target}" for t in comp.outgoing(s))
            lines.append(f"{s} = {alts};")
    lines.append(f"system = {format_equation(model.equation)};")
    for cls in ("small", "large"):
        labels = [l for l, c in model.size_hints.items() if c == cls]
        if labels:
            lines.append(f"{cls} {', '.join(labels)};")
    if model.threshold is not None:
        lines.append(f"threshold {model.threshold};")
    return "\n".join(lines) + "\n"
