"""Grouped PEPA models: parsing, exact aggregation of small groups, and checks.

Typical use::

    from pepagg import load_model, partition_groups, check_aggregation_condition, reduce, generate_ctmc, steady_state

    model = load_model("client_server.pepa")
    part = partition_groups(model, threshold=10)
    assert check_aggregation_condition(model, part).satisfied
    pi = steady_state(generate_ctmc(reduce(model, part)))
"""

from .analysis import check_aggregation_condition, classify, partition_groups, reduce
from .measures import Measure, parse_measures
from .solvers import build_marginal_odes, steady_state, transient
from .statespace import Ctmc, generate_ctmc
from .syntax import GroupedModel, ModelError, PepaError, load_model, parse_model
from .verify import boundary_states, collapse_ck, compare_generators, cross_rates, partition_subchains

__all__ = [
    "Ctmc", "GroupedModel", "Measure", "ModelError", "PepaError",
    "boundary_states", "build_marginal_odes", "check_aggregation_condition", "classify",
    "collapse_ck", "compare_generators", "cross_rates", "generate_ctmc", "load_model",
    "parse_measures", "parse_model", "partition_groups", "partition_subchains", "reduce",
    "steady_state", "transient",
]
