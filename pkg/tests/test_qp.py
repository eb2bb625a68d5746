import numpy as np
import pytest

from riskdtr.qp import QpInputError, QpProblem, QpSolution, QpStatus, kkt_residual, solve_qp

from _qp_oracle import enumeration_oracle, random_instance


def test_unconstrained_stationary_point():
    sol = solve_qp(QpProblem(q=[[1.0]], c=[-1.0]))
    assert sol.status is QpStatus.OPTIMAL
    assert sol.x == pytest.approx([1.0], abs=1e-9)
    assert sol.objective == pytest.approx(-0.5, abs=1e-9)


def test_active_lower_constraint():
    sol = solve_qp(QpProblem(q=[[1.0]], c=[0.0], w=[[1.0]], bl=[2.0], bu=[np.inf]))
    assert sol.status is QpStatus.OPTIMAL
    assert sol.x == pytest.approx([2.0], abs=1e-9)
    assert sol.objective == pytest.approx(2.0, abs=1e-9)


def test_equality_row():
    sol = solve_qp(QpProblem(q=np.eye(2), c=np.zeros(2), w=[[1.0, 1.0]], bl=[1.0], bu=[1.0]))
    assert sol.status is QpStatus.OPTIMAL
    assert sol.x == pytest.approx([0.5, 0.5], abs=1e-9)
    assert abs(sol.x @ [1.0, 1.0] - 1.0) <= 1e-9


def test_dimension_mismatch_rejected():
    with pytest.raises(QpInputError):
        QpProblem(q=np.eye(2), c=np.zeros(3))
    with pytest.raises(QpInputError):
        QpProblem(q=np.eye(2), c=np.zeros(2), w=[[1.0, 0.0]], bl=[0.0, 1.0], bu=[1.0, 2.0])


def test_asymmetric_q_rejected():
    with pytest.raises(QpInputError):
        QpProblem(q=[[1.0, 0.5], [0.0, 1.0]], c=np.zeros(2))


def test_inverted_bounds_rejected():
    with pytest.raises(QpInputError):
        QpProblem(q=np.eye(1), c=np.zeros(1), lb=[1.0], ub=[0.0])


def test_free_rows_dropped_at_ingestion():
    prob = QpProblem(
        q=np.eye(2),
        c=np.zeros(2),
        w=[[1.0, 0.0], [0.0, 1.0]],
        bl=[-np.inf, 0.5],
        bu=[np.inf, np.inf],
    )
    assert prob.n_rows == 1


def test_infeasible_detected():
    sol = solve_qp(
        QpProblem(q=[[1.0]], c=[0.0], w=[[1.0]], bl=[1.0], bu=[np.inf], ub=[0.0])
    )
    assert sol.status is QpStatus.INFEASIBLE


def test_optimal_kkt_residual_below_tol():
    rng = np.random.default_rng(7)
    for _ in range(25):
        inst = random_instance(rng)
        prob = QpProblem(**inst)
        sol = solve_qp(prob)
        if sol.status is not QpStatus.OPTIMAL:
            continue
        assert sol.kkt_residual <= 1e-8
        wx = prob.w @ sol.x
        assert np.all(wx >= prob.bl - 1e-8) and np.all(wx <= prob.bu + 1e-8)
        assert np.all(sol.x >= prob.lb - 1e-8) and np.all(sol.x <= prob.ub + 1e-8)


def test_perturbed_point_fails_kkt():
    prob = QpProblem(q=np.eye(2), c=[-1.0, -1.0])
    sol = solve_qp(prob)
    bad = QpSolution(
        x=sol.x + np.array([1.0, 0.0]),
        lagrange_constraints=sol.lagrange_constraints,
        lagrange_bounds=sol.lagrange_bounds,
        objective=0.0,
        status=QpStatus.OPTIMAL,
        kkt_residual=0.0,
    )
    assert kkt_residual(prob, bad) > 1e-8


def test_deterministic_repeat():
    rng = np.random.default_rng(3)
    inst = random_instance(rng)
    a = solve_qp(QpProblem(**inst))
    b = solve_qp(QpProblem(**inst))
    assert np.array_equal(a.x, b.x)
    assert a.objective == b.objective
    assert a.iterations == b.iterations


def test_matches_enumeration_oracle_200_instances():
    rng = np.random.default_rng(20240817)
    n_checked = 0
    for _ in range(200):
        inst = random_instance(rng)
        oracle_x, oracle_obj = enumeration_oracle(**inst)
        sol = solve_qp(QpProblem(**inst))
        if oracle_x is None:
            assert sol.status is QpStatus.INFEASIBLE
            continue
        assert sol.status is QpStatus.OPTIMAL, (sol.status, sol.message)
        assert sol.objective == pytest.approx(oracle_obj, abs=1e-6)
        # oracle candidate also satisfies the KKT conditions approximately
        n_checked += 1
    assert n_checked >= 150  # the generator rarely produces infeasible data


def test_oracle_solution_passes_kkt_residual():
    rng = np.random.default_rng(99)
    for _ in range(20):
        inst = random_instance(rng)
        oracle_x, oracle_obj = enumeration_oracle(**inst)
        if oracle_x is None:
            continue
        prob = QpProblem(**inst)
        sol = solve_qp(prob)
        assert sol.status is QpStatus.OPTIMAL
        # unique minimizer: points must coincide when strictly convex
        if np.linalg.eigvalsh(prob.q)[0] > 1e-8:
            assert np.allclose(sol.x, oracle_x, atol=1e-5)
        probe = QpSolution(
            x=oracle_x,
            lagrange_constraints=sol.lagrange_constraints,
            lagrange_bounds=sol.lagrange_bounds,
            objective=oracle_obj,
            status=QpStatus.OPTIMAL,
            kkt_residual=0.0,
        )
        if np.linalg.eigvalsh(prob.q)[0] > 1e-8:
            assert kkt_residual(prob, probe) <= 1e-5
