import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from swapcert import sdp
from swapcert.certify import swap_problem
from swapcert.errors import CertificateError, ValidationError

from cvx_oracle import solve_with_cvxpy


def sym(rng, d, scale=1.0):
    g = rng.normal(size=(d, d)) * scale
    return (g + g.T) / 2


def random_feasible_problem(seed, n=4, dims=(3, 2), with_eq=False):
    """A strictly feasible, bounded LMI problem.

    Primal interior: ``x0`` with every slack equal to the identity.  Dual
    interior: ``c = A*(Y0)`` for a positive definite ``Y0``, so the optimum is
    attained.
    """
    rng = np.random.default_rng(seed)
    x0 = rng.normal(size=n)
    blocks, ys = [], []
    for d in dims:
        mats = [sym(rng, d) for _ in range(n)]
        const = np.eye(d) - sum(xi * m for xi, m in zip(x0, mats))
        blocks.append((const, mats))
        g = rng.normal(size=(d, d))
        ys.append(g @ g.T + 0.5 * np.eye(d))
    c = np.array([sum(float(np.vdot(m[i], y)) for (_, m), y in zip(blocks, ys)) for i in range(n)])
    kwargs = {}
    if with_eq:
        E = rng.normal(size=(1, n))
        kwargs = {"eq_matrix": E, "eq_rhs": E @ x0}
        c = c + E[0] * rng.normal()
    return sdp.SdpProblem.from_dense(c, blocks, **kwargs)


class TestExamples:
    def test_two_by_two(self):
        # [[x, 1], [1, x]] PSD  <=>  x >= 1
        p = sdp.SdpProblem.from_dense([1.0], [(np.array([[0, 1], [1, 0.0]]), [np.eye(2)])])
        sol = sdp.solve(p)
        assert sol.status == sdp.OPTIMAL
        assert sol.x[0] == pytest.approx(1, abs=1e-6)
        assert sol.dual_objective <= sol.objective + 1e-6

    def test_constant_block_feasible(self):
        # a constant PSD block plus x >= 2
        p = sdp.SdpProblem.from_dense(
            [1.0], [(np.diag([1.0, 2.0]), [np.zeros((2, 2))]), (np.array([[-2.0]]), [np.eye(1)])])
        sol = sdp.solve(p)
        assert sol.status == sdp.OPTIMAL and sol.objective == pytest.approx(2, abs=1e-6)

    def test_equality(self):
        # minimise x1 subject to x1 >= x2^2 (as an LMI) and x2 == 3
        A1 = np.array([[0, 0], [0, 1.0]])
        A2 = np.array([[0, 1.0], [1, 0]])
        p = sdp.SdpProblem.from_dense([1.0, 0.0], [(np.array([[1.0, 0], [0, 0]]), [A1, A2])],
                                      eq_matrix=[[0, 1.0]], eq_rhs=[3.0])
        sol = sdp.solve(p)
        assert sol.status == sdp.OPTIMAL
        assert sol.x == pytest.approx([9, 3], abs=1e-5)

    def test_inconsistent_equalities(self):
        p = sdp.SdpProblem.from_dense([1.0], [(np.zeros((1, 1)), [np.eye(1)])],
                                      eq_matrix=[[1.0], [1.0]], eq_rhs=[0.0, 1.0])
        assert sdp.solve(p).status == sdp.PRIMAL_INFEASIBLE

    def test_primal_infeasible(self):
        # x >= 0 and -1 - x >= 0
        p = sdp.SdpProblem.from_dense([0.0], [(np.diag([0.0, -1.0]), [np.diag([1.0, -1.0])])])
        assert sdp.solve(p).status == sdp.PRIMAL_INFEASIBLE

    def test_unbounded(self):
        p = sdp.SdpProblem.from_dense([-1.0], [(np.zeros((1, 1)), [np.eye(1)])])
        assert sdp.solve(p).status == sdp.DUAL_INFEASIBLE

    def test_validation(self):
        with pytest.raises(ValidationError):
            sdp.SdpProblem.from_dense([1.0], [(np.array([[0, 1], [0, 0.0]]), [np.eye(2)])])
        with pytest.raises(ValidationError):
            sdp.SdpProblem.from_dense([1.0], [(np.eye(2), [np.array([[0, 1], [0, 0.0]])])])
        with pytest.raises(ValidationError):
            sdp.SdpProblem.from_dense([1.0], [(np.eye(2), [np.eye(2)])], eq_matrix=[[1.0]])
        with pytest.raises(ValidationError):
            sdp.solve(sdp.SdpProblem.from_dense([1.0], [(np.eye(1), [np.eye(1)])]), tol=0)


class TestProperties:
    @given(st.integers(0, 2 ** 32 - 1), st.booleans())
    @settings(max_examples=25)
    def test_random_problems_match_oracle(self, seed, with_eq):
        p = random_feasible_problem(seed, with_eq=with_eq)
        sol = sdp.solve(p)
        assert sol.status == sdp.OPTIMAL
        ref, _, status = solve_with_cvxpy(p)
        assert status == "optimal"
        assert sol.objective == pytest.approx(ref, abs=1e-5 * (1 + abs(ref)))
        assert min(np.linalg.eigvalsh(s).min() for s in p.slacks(sol.x)) >= -1e-6

    @given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 100))
    @settings(max_examples=15)
    def test_objective_scaling(self, seed, scale):
        p = random_feasible_problem(seed)
        q = sdp.SdpProblem(p.c * scale, p.blocks)
        a, b = sdp.solve(p), sdp.solve(q)
        assert b.objective == pytest.approx(scale * a.objective, abs=1e-5 * (1 + abs(b.objective)))

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=15)
    def test_certified_bound_below_optimum(self, seed):
        p = random_feasible_problem(seed)
        ref, x, _ = solve_with_cvxpy(p)
        bounded = sdp.SdpProblem(p.c, p.blocks, bounds=np.abs(x) + 10)
        sol = sdp.solve(bounded)
        lb = sdp.certified_lower_bound(bounded, sol)
        assert lb <= ref + 1e-7 * (1 + abs(ref))
        assert lb == pytest.approx(ref, abs=1e-4 * (1 + abs(ref)))

    def test_deterministic_bytes(self):
        p = random_feasible_problem(17, with_eq=True)
        a, b = sdp.solve(p), sdp.solve(p)
        assert a.x.tobytes() == b.x.tobytes()
        assert all(u.tobytes() == v.tobytes() for u, v in zip(a.duals, b.duals))


class TestCertificate:
    def test_needs_duals(self):
        p = sdp.SdpProblem.from_dense([1.0], [(np.eye(1), [np.eye(1)])])
        sol = sdp.solve(p)
        empty = sdp.SdpSolution(sol.x, sol.objective, sol.dual_objective, (), sol.eq_multipliers,
                                sol.status, sol.gap, sol.primal_residual, sol.dual_residual, sol.iterations)
        with pytest.raises(CertificateError):
            sdp.certified_lower_bound(p, empty)

    def test_zero_duals_never_overstate(self):
        p = random_feasible_problem(3)
        sol = sdp.solve(p)
        junk = sdp.SdpSolution(sol.x, sol.objective, sol.dual_objective,
                               tuple(np.zeros_like(y) for y in sol.duals), sol.eq_multipliers,
                               sol.status, sol.gap, sol.primal_residual, sol.dual_residual, sol.iterations)
        # either the repair gives up or whatever it returns is still a valid bound
        ref, _, _ = solve_with_cvxpy(p)
        try:
            lb = sdp.certified_lower_bound(p, junk)
        except CertificateError:
            return
        assert lb <= ref + 1e-6 * (1 + abs(ref))

    def test_psd_clip(self):
        y = np.diag([2.0, -1.0])
        assert np.allclose(sdp.psd_clip(y), np.diag([2.0, 0.0]))


class TestDump:
    def test_round_trip_random(self):
        p = random_feasible_problem(8, with_eq=True)
        p = sdp.SdpProblem(p.c, p.blocks, p.eq_matrix, p.eq_rhs, bounds=np.ones(p.n))
        text = sdp.dump_problem(p)
        q = sdp.load_problem(text)
        assert sdp.dump_problem(q) == text
        assert np.array_equal(q.c, p.c) and np.array_equal(q.bounds, p.bounds)
        for a, b in zip(p.blocks, q.blocks):
            assert np.array_equal(a.const, b.const)
            assert (a.coeffs != b.coeffs).nnz == 0
        assert np.array_equal(q.eq_matrix, p.eq_matrix)

    def test_round_trip_swap_problem(self):
        p = swap_problem(math.radians(40), epsilon=0.0).problem
        q = sdp.load_problem(sdp.dump_problem(p))
        assert sdp.dump_problem(q) == sdp.dump_problem(p)

    def test_unknown_record(self):
        with pytest.raises(ValidationError):
            sdp.load_problem("n 1\nc 1\nzz 3\n")


@pytest.mark.parametrize("deg", [30.0, 40.0, 45.0])
def test_swap_problem_matches_oracle(deg):
    mp = swap_problem(math.radians(deg), epsilon=0.05)
    sol = sdp.solve(mp.problem)
    ref, _, status = solve_with_cvxpy(mp.problem)
    assert status in ("optimal", "optimal_inaccurate")
    assert sol.objective == pytest.approx(ref, abs=1e-5)


def test_block_helpers():
    blk = sdp.Block(np.eye(2), sp.csr_matrix(np.array([[1.0, 0, 0, 1.0]])))
    assert np.allclose(blk.evaluate(np.array([2.0])), 3 * np.eye(2))
    assert blk.adjoint(np.eye(2)) == pytest.approx([2.0])
