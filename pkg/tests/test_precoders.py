"""Tests for the rank-1 projection and the NSP, POCS, ADMM, SSP and Dykstra solvers."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_constraints
from oracles import kkt_residual, projection_2d, random_feasible_points
from specprecoder.metrics import sem_margin_per_symbol
from specprecoder.precoders import (
    AdmmState,
    ConvergenceTrace,
    NumericalError,
    Rank1Constraint,
    admm_precode,
    constraints_from,
    dense_inverse_calls,
    dykstra_oracle,
    max_violation_db,
    nsp_matrix,
    nsp_precode,
    pocs_precode,
    project_rank1,
    sherman_morrison_apply,
    ssp_precode,
)


def cvec(rng, n):
    return rng.normal(size=n) + 1j * rng.normal(size=n)


def hermitian_pd(rng, n):
    b = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return b @ b.conj().T + n * np.eye(n)


class TestTypes:
    def test_constraint_validation(self):
        with pytest.raises(ValueError):
            Rank1Constraint(np.zeros(3), 1.0)
        with pytest.raises(ValueError):
            Rank1Constraint(np.ones(3), 0.0)
        with pytest.raises(ValueError):
            Rank1Constraint(np.ones((2, 2)), 1.0)
        assert Rank1Constraint(np.array([3.0, 4.0j]), 1.0).norm_sq == pytest.approx(25.0)

    def test_trace_requires_increasing_iterations(self):
        t = ConvergenceTrace()
        t.append(1, 2.0, 3.0)
        t.append(4, 1.0, -1.0)
        with pytest.raises(ValueError):
            t.append(4, 0.5, -2.0)
        assert t.first_compliant() == 4
        assert len(t) == 2

    def test_constraints_from_length_check(self):
        with pytest.raises(ValueError):
            constraints_from(np.ones((2, 3)), [1.0])

    def test_max_violation_no_constraints(self):
        assert max_violation_db([], np.ones(3)) == -400.0


class TestProjectRank1:
    def test_interior_point_unchanged(self, rng):
        u = cvec(rng, 6)
        x = cvec(rng, 6)
        x -= np.vdot(u, x) / np.vdot(u, u) * u  # u^H x = 0
        np.testing.assert_array_equal(project_rank1(x, Rank1Constraint(u, 1.0)), x)

    def test_unit_basis_example(self):
        x = np.array([2.0, 0, 0, 0], dtype=complex)
        out = project_rank1(x, Rank1Constraint(np.eye(4)[0], 1.0))
        np.testing.assert_allclose(out, [1, 0, 0, 0], atol=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 40), log_b=st.floats(-6, 3))
    def test_matches_2d_oracle(self, seed, n, log_b):
        r = np.random.default_rng(seed)
        x, u = cvec(r, n), cvec(r, n)
        b = 10**log_b * abs(np.vdot(u, x)) ** 2
        c = Rank1Constraint(u, b)
        p = project_rank1(x, c)
        ref = projection_2d(x, u, b)
        assert np.linalg.norm(p - ref) <= 1e-8 * max(np.linalg.norm(x), 1.0)
        # idempotent and on the boundary when it moved
        assert np.linalg.norm(project_rank1(p, c) - p) <= 1e-12 * np.linalg.norm(p)
        if log_b < 0:
            assert abs(abs(np.vdot(u, p)) ** 2 - b) <= 1e-9 * b

    def test_batch_matches_loop(self, rng):
        u = cvec(rng, 8)
        xs = np.array([cvec(rng, 8) for _ in range(5)])
        c = Rank1Constraint(u, 0.3 * np.median(np.abs(xs @ u.conj()) ** 2))
        out = project_rank1(xs, c)
        for i in range(5):
            np.testing.assert_allclose(out[i], project_rank1(xs[i], c), atol=1e-14)


class TestNsp:
    def test_null_space_fixed_point(self, rng):
        A = cvec(rng, 3 * 10).reshape(3, 10)
        d = nsp_matrix(A) @ cvec(rng, 10)
        np.testing.assert_allclose(nsp_precode(A, d).d_bar, d, atol=1e-10)

    def test_no_constraints(self, rng):
        d = cvec(rng, 7)
        res = nsp_precode(np.zeros((0, 7)), d)
        np.testing.assert_array_equal(res.d_bar, d)
        assert res.evm_pct == 0.0

    def test_scenario_nulling_and_evm(self, sem1):
        d = sem1.symbols(4)
        for x in d:
            res = nsp_precode(sem1.A, x)
            assert np.max(np.abs(sem1.A.matrix @ res.d_bar)) / np.linalg.norm(x) < 1e-8
            assert res.evm_pct == pytest.approx(100 * np.linalg.norm(x - res.d_bar) / np.linalg.norm(x), rel=1e-12)

    def test_projector_idempotent_hermitian(self, rng):
        A = cvec(rng, 8 * 64).reshape(8, 64)
        g = nsp_matrix(A)
        assert np.max(np.abs(g @ g - g)) < 1e-9
        assert np.max(np.abs(g - g.conj().T)) < 1e-9

    def test_ill_conditioned_rejected(self, rng):
        row = cvec(rng, 12)
        with pytest.raises(np.linalg.LinAlgError, match="ill-conditioned"):
            nsp_precode(np.stack([row, row]), cvec(rng, 12))

    def test_batch_matches_single(self, sem2):
        d = sem2.symbols(3)
        batch = nsp_precode(sem2.A, d).d_bar
        for i in range(3):
            np.testing.assert_allclose(batch[i], nsp_precode(sem2.A, d[i]).d_bar, atol=1e-12)


class TestPocs:
    def test_feasible_start_is_fixed_point(self, rng):
        d = cvec(rng, 10)
        cons = [Rank1Constraint(cvec(rng, 10), 1e6) for _ in range(3)]
        res = pocs_precode(cons, d, max_iter=50, tol_db=0.0)
        np.testing.assert_array_equal(res.d_bar, d)
        assert res.iterations == 1

    def test_single_constraint_one_sweep(self, rng):
        d = cvec(rng, 10)
        (c,) = random_constraints(rng, 10, 1, d)
        res = pocs_precode([c], d, max_iter=100, tol_db=1e-9)
        assert res.iterations == 1
        np.testing.assert_allclose(res.d_bar, project_rank1(d, c), atol=1e-14)

    def test_sem1_compliance_within_budget(self, sem1):
        d = sem1.symbols(10)
        res = pocs_precode(sem1.constraints, d, max_iter=3000, tol_db=0.01)
        assert res.max_violation_db <= 0.01

    def test_callback_sees_every_sweep(self, rng):
        d = cvec(rng, 10)
        cons = random_constraints(rng, 10, 3, d)
        seen = []
        pocs_precode(cons, d, max_iter=7, callback=lambda it, x: seen.append(it))
        assert seen == list(range(1, 8))

    def test_rejects_bad_budget(self, rng):
        with pytest.raises(ValueError):
            pocs_precode([], cvec(rng, 3), max_iter=0)


class TestAdmm:
    def test_no_constraints(self, rng):
        d = cvec(rng, 9)
        res = admm_precode([], d, max_iter=10, tol_db=0.01)
        np.testing.assert_array_equal(res.d_bar, d)
        assert res.iterations == 1

    def test_feasible_fixed_point_is_stationary(self, rng):
        d = cvec(rng, 12)
        cons = [Rank1Constraint(cvec(rng, 12), 1e6) for _ in range(4)]
        state = AdmmState(np.tile(d, (4, 1)), np.zeros((4, 12), dtype=complex), 10.0)
        res = admm_precode(cons, d, rho=10.0, max_iter=1, state=state)
        assert np.max(np.abs(res.d_bar - d)) < 1e-12
        assert np.max(np.abs(res.state.y - d)) < 1e-12
        assert np.max(np.abs(res.state.z)) < 1e-12

    def test_sem2_compliance_within_800(self, sem2):
        d = sem2.symbols(50)
        res = admm_precode(sem2.constraints, d, rho=10.0, max_iter=800, record_trace=False)
        worst = sem_margin_per_symbol(sem2.A, sem2.mask, res.d_bar).max(axis=1)
        assert np.all(worst <= 0.01), f"{np.sum(worst > 0.01)} of 50 symbols above 0.01 dB (max {worst.max():.4f})"

    def test_does_not_stop_on_shrunken_first_iterate(self, rng):
        d = cvec(rng, 16)
        cons = random_constraints(rng, 16, 3, d)
        res = admm_precode(cons, d, rho=10.0, max_iter=5000, tol_db=0.01)
        # the first iterate d / (1 + rho M) is feasible but far from optimal
        assert res.iterations > 1
        assert res.converged
        ref = dykstra_oracle(cons, d)
        assert res.evm_pct == pytest.approx(ref.evm_pct, rel=1e-3)

    def test_warm_start_continues(self, rng):
        d = cvec(rng, 16)
        cons = random_constraints(rng, 16, 3, d)
        full = admm_precode(cons, d, max_iter=40, record_trace=False)
        half = admm_precode(cons, d, max_iter=20, record_trace=False)
        rest = admm_precode(cons, d, max_iter=20, state=half.state, record_trace=False)
        np.testing.assert_allclose(rest.d_bar, full.d_bar, atol=1e-12)

    @pytest.mark.parametrize("kwargs", [dict(rho=0.0), dict(rho=-1.0), dict(max_iter=0)])
    def test_invalid_parameters(self, rng, kwargs):
        with pytest.raises(ValueError):
            admm_precode([], cvec(rng, 3), **kwargs)

    def test_state_shape_checked(self, rng):
        d = cvec(rng, 5)
        cons = random_constraints(rng, 5, 2, d)
        bad = AdmmState(np.zeros((3, 5), complex), np.zeros((3, 5), complex), 10.0)
        with pytest.raises(ValueError, match="state shape"):
            admm_precode(cons, d, state=bad)


class TestShermanMorrison:
    def test_zero_delta_unchanged(self, rng):
        g = np.linalg.inv(hermitian_pd(rng, 5))
        np.testing.assert_array_equal(sherman_morrison_apply(g, cvec(rng, 5), 0.0), g)

    def test_identity_basis_example(self):
        out = sherman_morrison_apply(np.eye(4, dtype=complex), np.eye(4)[0].astype(complex), 1.0)
        np.testing.assert_allclose(out, np.diag([0.5, 1, 1, 1]), atol=1e-15)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 30), delta=st.floats(1e-3, 1e3))
    def test_matches_dense_inverse(self, seed, n, delta):
        r = np.random.default_rng(seed)
        g = hermitian_pd(r, n)
        u = cvec(r, n)
        out = sherman_morrison_apply(np.linalg.inv(g), u, delta)
        ref = np.linalg.inv(g + delta * np.outer(u, u.conj()))
        assert np.linalg.norm(out - ref) <= 1e-9 * np.linalg.norm(ref)

    def test_input_not_modified(self, rng):
        g = np.linalg.inv(hermitian_pd(rng, 6))
        keep = g.copy()
        sherman_morrison_apply(g, cvec(rng, 6), 2.0)
        np.testing.assert_array_equal(g, keep)

    def test_singular_update_raises(self):
        with pytest.raises(NumericalError):
            sherman_morrison_apply(np.eye(3, dtype=complex), np.eye(3)[0].astype(complex), -1.0)


class TestSsp:
    def test_inactive_constraints_leave_data(self, rng):
        d = cvec(rng, 10)
        cons = [Rank1Constraint(cvec(rng, 10), 1e6) for _ in range(3)]
        res = ssp_precode(cons, d, n_iter=3)
        np.testing.assert_allclose(res.d_bar, d, atol=1e-15)
        assert np.all(res.state.mu == 0)

    def test_single_constraint_exact_after_one_sweep(self, rng):
        for _ in range(20):
            d = cvec(rng, 24)
            (c,) = random_constraints(rng, 24, 1, d)
            res = ssp_precode([c], d, n_iter=1)
            np.testing.assert_allclose(res.d_bar, project_rank1(d, c), atol=1e-8 * np.linalg.norm(d))

    def test_literal_zero_phase_variant_runs(self, rng):
        d = cvec(rng, 24)
        cons = random_constraints(rng, 24, 3, d)
        res = ssp_precode(cons, d, n_iter=3, align_phase=False)
        assert np.all(res.state.mu >= 0)
        assert np.all(np.isfinite(res.d_bar))

    def test_state_invariants(self, sem2):
        d = sem2.symbols(1)[0]
        res = ssp_precode(sem2.constraints, d, n_iter=3)
        mu, g_inv = res.state.mu, res.state.g_inv
        assert np.all(mu >= 0)
        assert np.max(np.abs(g_inv - g_inv.conj().T)) < 1e-10
        u = np.array([c.u for c in sem2.constraints])
        dense = np.linalg.inv(np.eye(d.size) + (u.T * mu) @ u.conj())
        assert np.linalg.norm(g_inv - dense) < 1e-9 * np.linalg.norm(dense)
        np.testing.assert_allclose(res.d_bar, dense @ d, atol=1e-9 * np.linalg.norm(d))

    def test_no_dense_fallback_on_scenario(self, sem1, sem2):
        before = dense_inverse_calls()
        for sc in (sem1, sem2):
            for x in sc.symbols(20):
                assert not ssp_precode(sc.constraints, x, n_iter=3).diagnostics
        assert dense_inverse_calls() == before

    def test_converges_to_oracle_with_more_sweeps(self, rng):
        d = cvec(rng, 32)
        cons = random_constraints(rng, 32, 4, d)
        res = ssp_precode(cons, d, n_iter=200)
        ref = dykstra_oracle(cons, d)
        assert np.linalg.norm(res.d_bar - ref.d_bar) < 1e-6 * np.linalg.norm(d)

    def test_rejects_batch_input(self, rng):
        with pytest.raises(ValueError, match="one data vector"):
            ssp_precode([], np.ones((2, 3), complex))


class TestDykstra:
    def test_single_constraint_is_projection(self, rng):
        d = cvec(rng, 16)
        (c,) = random_constraints(rng, 16, 1, d)
        res = dykstra_oracle([c], d, tol=1e-13)
        np.testing.assert_allclose(res.d_bar, project_rank1(d, c), atol=1e-12 * np.linalg.norm(d))

    def test_feasible_input_returned(self, rng):
        d = cvec(rng, 8)
        cons = [Rank1Constraint(cvec(rng, 8), 1e6) for _ in range(2)]
        np.testing.assert_allclose(dykstra_oracle(cons, d).d_bar, d, atol=1e-15)

    def test_small_instance_optimal(self, rng):
        for _ in range(10):
            d = cvec(rng, 8)
            cons = random_constraints(rng, 8, 2, d)
            res = dykstra_oracle(cons, d)
            assert res.converged
            us = np.array([c.u for c in cons])
            bs = np.array([c.b for c in cons])
            assert kkt_residual(us, bs, d, res.d_bar) < 1e-6
            pts = random_feasible_points(us, bs, res.d_bar, 2000, rng)
            obj = np.sum(np.abs(pts - d) ** 2, axis=1)
            assert np.linalg.norm(d - res.d_bar) ** 2 <= obj.min() * (1 + 1e-10)

    def test_batch_matches_single(self, rng):
        d = np.array([cvec(rng, 10) for _ in range(3)])
        cons = random_constraints(rng, 10, 3, d[0])
        batch = dykstra_oracle(cons, d).d_bar
        for i in range(3):
            np.testing.assert_allclose(batch[i], dykstra_oracle(cons, d[i]).d_bar, atol=1e-9 * np.linalg.norm(d[i]))

    def test_no_constraints(self, rng):
        d = cvec(rng, 4)
        np.testing.assert_array_equal(dykstra_oracle([], d).d_bar, d)
