from pathlib import Path

import pytest

from pepagg.experiment import bundled
from pepagg.syntax import load_model

CORPUS = Path(__file__).parent / "corpus"

MODEL1 = """
rates { r_t = 2.0; r_c = 20.0; r_s = 10.0; r_l = 50.0; r_b = 0.005; r_f = 0.005; }
C_think  = (think, r_t).C_req;
C_req    = (req, r_c).C_think;
S_idle   = (req, r_s).S_log + (brk, r_b).S_broken;
S_log    = (log, r_l).S_idle;
S_broken = (fix, r_f).S_idle;
system = Servers{S_idle[2]} <req> Clients{C_think[2]};
small Servers;
large Clients;
"""


def cs_model(servers=5, clients=100, **rates):
    model = load_model(bundled("client_server.pepa")).with_populations({"Servers": servers, "Clients": clients})
    return model.with_rates(rates) if rates else model


def corpus_paths():
    return sorted(CORPUS.glob("*.pepa")) + [Path(bundled("client_server.pepa"))]


@pytest.fixture
def cs22():
    return cs_model(2, 2)


@pytest.fixture
def cs():
    return cs_model()


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
