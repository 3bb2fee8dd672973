import pytest

from pepagg.measures import Measure, MeasureError, parse_measures
from pepagg.statespace import StateLayout

SERVERS = StateLayout(("Servers",), (("S_idle", "S_log", "S_broken"),))
TWO = StateLayout(("A", "B"), (("Idle", "Busy"), ("Idle", "Down")))


@pytest.mark.parametrize("expr, state, expected", [
    ("S_idle + S_log == 2", (1, 1, 3), True),
    ("S_idle + S_log == 2", (2, 1, 2), False),
    ("S_broken == 0", (3, 2, 0), True),
    ("S_idle == 3 and S_log == 1 and S_broken == 1", (3, 1, 1), True),
    ("not S_broken or S_idle > 4", (0, 0, 5), False),
    ("0 < S_log <= 2", (1, 2, 2), True),
    ("Servers.S_broken * 2 - 1 >= 3", (2, 1, 2), True),
])
def test_predicates(expr, state, expected):
    assert Measure("m", expr).compile(SERVERS)(state) is expected


def test_qualified_names_resolve_ambiguity():
    pred = Measure("m", "A.Idle + B.Idle == 1").compile(TWO)
    assert pred((1, 0, 0, 1)) and not pred((1, 0, 1, 0))
    with pytest.raises(MeasureError, match="ambiguous"):
        Measure("m", "Idle == 1").compile(TWO)


@pytest.mark.parametrize("expr", ["__import__('os')", "S_idle.real", "S_idle / 2", "S_idle == 1.5",
                                  "[S_idle]", "Nope == 1", "S_idle ==", "Servers.Nope == 1"])
def test_rejected(expr):
    with pytest.raises(MeasureError):
        Measure("m", expr).compile(SERVERS)


def test_parse_measures():
    (m,) = parse_measures(["E2=S_idle + S_log == 2"])
    assert m == Measure("E2", "S_idle + S_log == 2")
    with pytest.raises(MeasureError):
        parse_measures(["no equals sign"])
