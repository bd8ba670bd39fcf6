import numpy as np
import pytest

from gaplab import (
    WeightedProblem,
    solve_problem,
    unit_square,
    disk_domain,
    ConformalChart,
)


@pytest.fixture(scope="session")
def square_problem():
    return WeightedProblem.from_chart(unit_square(), name="unit square")


@pytest.fixture(scope="session")
def square_result(square_problem):
    """Unit-square eigensolve shared by the eigensolver/concavity tests."""
    return solve_problem(square_problem, h_target=0.03, k=2)


@pytest.fixture(scope="session")
def disk_result():
    domain = disk_domain(ConformalChart.euclidean(), radius=1.0, n=256)
    problem = WeightedProblem.from_chart(domain, name="unit disk")
    return solve_problem(problem, h_target=0.05, k=2)
