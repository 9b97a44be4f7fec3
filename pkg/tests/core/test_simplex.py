"""Tests for the dense tableau simplex."""

import numpy as np
import pytest

from adapted_wasserstein.core.errors import InvalidInputError, ProblemSizeError, SolverError
from adapted_wasserstein.core.simplex import LinearProgram, LPStatus, solve_lp


@pytest.mark.unit
def test_two_variable_inequality_program() -> None:
    """max x + y under two cuts sits at the vertex (1.6, 1.2)."""
    lp = LinearProgram(
        c=np.array([-1.0, -1.0]),
        a_ub=np.array([[1.0, 2.0], [3.0, 1.0]]),
        b_ub=np.array([4.0, 6.0]),
    )
    res = solve_lp(lp)
    assert res.status is LPStatus.OPTIMAL
    assert res.value == pytest.approx(-2.8)
    np.testing.assert_allclose(res.x, [1.6, 1.2], atol=1e-12)


@pytest.mark.unit
def test_equality_with_negative_right_hand_side() -> None:
    """x - y = -1 with minimal x + y gives (0, 1)."""
    lp = LinearProgram(c=np.array([1.0, 1.0]), a_eq=np.array([[1.0, -1.0]]), b_eq=np.array([-1.0]))
    res = solve_lp(lp).require_optimal()
    assert res.value == pytest.approx(1.0)
    np.testing.assert_allclose(res.x, [0.0, 1.0], atol=1e-12)


@pytest.mark.unit
def test_free_and_bounded_variables() -> None:
    """A free variable reaches its cut; an upper bound caps the other."""
    lp = LinearProgram(
        c=np.array([1.0, -1.0]),
        a_ub=np.array([[-1.0, 0.0]]),
        b_ub=np.array([3.0]),
        lower=np.array([-np.inf, 0.0]),
        upper=np.array([np.inf, 2.0]),
    )
    res = solve_lp(lp)
    assert res.value == pytest.approx(-5.0)
    np.testing.assert_allclose(res.x, [-3.0, 2.0], atol=1e-12)


@pytest.mark.unit
def test_infeasible_program() -> None:
    """x <= -1 with x >= 0 is infeasible and `require_optimal` raises."""
    res = solve_lp(LinearProgram(c=np.array([1.0]), a_ub=np.array([[1.0]]), b_ub=np.array([-1.0])))
    assert res.status is LPStatus.INFEASIBLE
    with pytest.raises(SolverError, match="infeasible"):
        res.require_optimal()


@pytest.mark.unit
def test_unbounded_program() -> None:
    """Minimizing -x over x >= 1 is unbounded."""
    res = solve_lp(LinearProgram(c=np.array([-1.0]), a_ub=np.array([[-1.0]]), b_ub=np.array([-1.0])))
    assert res.status is LPStatus.UNBOUNDED


@pytest.mark.unit
def test_size_limit() -> None:
    """Programs over the variable limit are refused before solving."""
    with pytest.raises(ProblemSizeError):
        solve_lp(LinearProgram(c=np.ones(3)), max_variables=2)


@pytest.mark.unit
def test_malformed_program() -> None:
    """Misaligned constraint shapes are invalid input."""
    with pytest.raises(InvalidInputError):
        LinearProgram(c=np.ones(2), a_eq=np.ones((1, 3)), b_eq=np.ones(1))
    with pytest.raises(InvalidInputError):
        LinearProgram(c=np.ones(2), lower=np.array([1.0, 0.0]), upper=np.array([0.0, 1.0]))


@pytest.mark.unit
def test_degenerate_program_is_deterministic() -> None:
    """A degenerate assignment problem returns the same vertex every time."""
    n = 4
    a_eq = np.zeros((2 * n, n * n))
    for i in range(n):
        a_eq[i, i * n: (i + 1) * n] = 1.0
        a_eq[n + i, i::n] = 1.0
    lp = LinearProgram(c=np.zeros(n * n), a_eq=a_eq, b_eq=np.ones(2 * n))
    first, second = solve_lp(lp), solve_lp(lp)
    assert first.status is LPStatus.OPTIMAL
    np.testing.assert_array_equal(first.x, second.x)
    np.testing.assert_allclose(first.x.reshape(n, n).sum(axis=0), np.ones(n), atol=1e-12)
