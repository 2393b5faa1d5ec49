"""Shared fixtures: the standard trigonometric model and its kernel tables.

Table construction dominates test time, so tables are session scoped and
treated as read-only by every test that receives them.
"""

import pytest

from warpgreen import Grid, OperatorModel, greens_matrix, parse_fn_spec


@pytest.fixture(scope="session")
def running_model():
    """f = 2 + cos(2 pi r), kappa = 1, n = 1: the standard nonconstant model."""
    return OperatorModel(parse_fn_spec("trig:2,1"), parse_fn_spec("const:1"), 1)


@pytest.fixture(scope="session")
def const_model():
    """f = 1, kappa = 1: translation invariant, every diagnostic is flat."""
    return OperatorModel(parse_fn_spec("const:1"), parse_fn_spec("const:1"), 1)


@pytest.fixture(scope="session")
def tables_256(running_model):
    return greens_matrix(running_model, Grid(256))


@pytest.fixture(scope="session")
def tables_512(running_model):
    return greens_matrix(running_model, Grid(512))


@pytest.fixture(scope="session")
def tables_1024(running_model):
    return greens_matrix(running_model, Grid(1024))


@pytest.fixture(scope="session")
def const_tables_256(const_model):
    return greens_matrix(const_model, Grid(256))
