import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phnet.boundary import (MAXIMAL, NOT_ACCRETIVE, NOT_MAXIMAL, ContractionForm, MatrixForm,
                            accretivity_sampler, adjoint_condition, boundary_form, check_m_form,
                            check_wb_maccretive, contraction_to_wb, factor_wb, is_contraction)
from phnet.errors import BoundaryConditionError, DimensionError, NotCertifiedError
from phnet.network import Interval, NetworkSpec
from phnet.transform import boundary_matrix_c, build_congruence


def random_contraction(rng, N, norm=None):
    A = rng.standard_normal((N, N))
    s = np.linalg.norm(A, 2)
    return A * ((norm if norm is not None else rng.uniform(0, 1)) / s)


def random_p1(rng, N):
    while True:
        A = rng.standard_normal((N, N))
        P = A + A.T
        if np.abs(np.linalg.eigvalsh(P)).min() > 0.1:
            return P


def c_for(P1, a=0.0, b=1.0):
    P1 = np.atleast_2d(P1)
    plan = build_congruence(NetworkSpec((Interval(a, b),) * P1.shape[0]), P1)
    return boundary_matrix_c(plan, P1).C


@pytest.mark.parametrize("M,expected", [
    (np.zeros((1, 1)), True),
    (np.array([[0.0, 1.0], [1.0, 0.0]]), True),
    (1.5 * np.eye(2), False),
])
def test_is_contraction(M, expected):
    assert is_contraction(M) is expected


def test_contraction_form_validation():
    ContractionForm(np.zeros((2, 1)), (1, 1, 0))
    with pytest.raises(BoundaryConditionError):
        ContractionForm(1.5 * np.eye(1))
    with pytest.raises(DimensionError):
        ContractionForm(np.zeros((2, 1)))
    with pytest.raises(DimensionError):
        ContractionForm(np.zeros((2, 2)), (2, 1, 1))


def test_matrix_form_rank():
    assert MatrixForm([[0.0, 1.0]]).full_rank
    assert not MatrixForm([[0.0, 0.0]]).full_rank
    with pytest.raises(DimensionError):
        MatrixForm([[1.0, 2.0, 3.0]])


def test_boundary_form_values():
    assert boundary_form([1.0], [0.0]) == 1.0
    assert boundary_form([1.0], [1.0]) == 0.0
    assert boundary_form([1.0, 2.0], [0.0, 1.0]) == 4.0
    with pytest.raises(DimensionError):
        boundary_form([1.0], [0.0], [1.0, 2.0], [0.0])


def test_adjoint_condition_zero_inflow():
    # M = 0: the adjoint pins the outgoing trace
    adj = adjoint_condition(np.zeros((1, 1)))
    assert adj.residual([1.0], [5.0]) == pytest.approx([1.0])
    assert adj.residual([0.0], [5.0]) == pytest.approx([0.0])


def test_adjoint_condition_periodic():
    adj = adjoint_condition(-np.eye(2))
    v = np.array([0.3, -1.2])
    np.testing.assert_allclose(adj.residual(v, v), 0.0)


def test_adjoint_condition_transposes():
    M = np.array([[0.1, 0.5], [-0.2, 0.3]])
    I, Mt = adjoint_condition(ContractionForm(M)).matrices()
    np.testing.assert_array_equal(I, np.eye(2))
    np.testing.assert_array_equal(Mt, M.T)


def test_skew_case_needs_unitary_and_balanced_counts():
    # D skew-adjoint iff the boundary form vanishes identically: |out| = |in| for in = -M out
    rng = np.random.default_rng(0)
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    for _ in range(10):
        out = rng.standard_normal(3)
        assert boundary_form(out, -Q @ out) == pytest.approx(0.0, abs=1e-12)
    # m_plus != m_minus: M is not square and cannot be unitary
    M = np.array([[1.0], [0.0]])
    assert boundary_form([1.0], -M @ [1.0]) == pytest.approx(0.0)
    assert not np.allclose(M @ M.T, np.eye(2))


def test_wb_zero_inflow():
    cert = check_wb_maccretive([[0.0, 1.0]], [[1.0]], np.eye(2))
    assert cert.verdict == MAXIMAL
    np.testing.assert_allclose(cert.M, [[0.0]])
    np.testing.assert_allclose(cert.L, [[1.0]])


def test_wb_outflow_pinned():
    cert = check_wb_maccretive([[1.0, 0.0]], [[1.0]], np.eye(2))
    assert cert.verdict == NOT_ACCRETIVE
    assert cert.psd_min == pytest.approx(-1.0)
    w = cert.witness
    assert np.sum(w["in"] ** 2) > np.sum(w["out"] ** 2)
    np.testing.assert_allclose(np.array([[1.0, 0.0]]) @ w["traces"], 0.0, atol=1e-14)


def test_wb_conservative():
    cert = check_wb_maccretive([[1.0, -1.0]], [[1.0]], np.eye(2))
    assert cert.verdict == MAXIMAL
    np.testing.assert_allclose(cert.M, [[-1.0]])
    np.testing.assert_allclose(cert.L, [[-1.0]])
    assert cert.psd_min == pytest.approx(0.0, abs=1e-14)


def test_wb_rank_deficient():
    assert check_wb_maccretive([[0.0, 0.0]], [[1.0]], np.eye(2)).verdict == NOT_ACCRETIVE
    cert = check_wb_maccretive(np.eye(2), [[1.0]], np.eye(2))
    assert cert.verdict == NOT_MAXIMAL
    assert cert.non_unique


def test_factor_examples():
    L, M = factor_wb([[0.0, 1.0]], np.eye(2))
    assert (L[0, 0], M[0, 0]) == (1.0, 0.0)
    L, M = factor_wb([[-1.0, 1.0]], np.eye(2))
    assert (L[0, 0], M[0, 0]) == (1.0, -1.0)
    with pytest.raises(NotCertifiedError):
        factor_wb([[1.0, 0.0]], np.eye(2))


def test_contraction_to_wb_examples():
    np.testing.assert_allclose(contraction_to_wb(np.zeros((1, 1)), np.eye(2)), [[0.0, 1.0]])
    C = c_for([[-1.0]], -0.5, 0.5)
    np.testing.assert_allclose(contraction_to_wb(np.zeros((1, 1)), C), [[1.0, 0.0]])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2 ** 31 - 1))
def test_round_trip(N, seed):
    rng = np.random.default_rng(seed)
    P = random_p1(rng, N)
    C = c_for(P, 0.0, rng.uniform(0.5, 3))
    M = random_contraction(rng, N)
    L, M2 = factor_wb(contraction_to_wb(M, C), C)
    np.testing.assert_allclose(L, np.eye(N), atol=1e-10)
    np.testing.assert_allclose(M2, M, atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2 ** 31 - 1))
def test_dual_forms_agree(N, seed):
    rng = np.random.default_rng(seed)
    P = random_p1(rng, N)
    cert = check_wb_maccretive(rng.standard_normal((N, 2 * N)), P, c_for(P))
    tol = 1e-9
    assert (cert.psd_min >= -tol) == (cert.psd_min_iii >= -tol)
    if cert.rank == N:
        assert (cert.verdict == MAXIMAL) == (cert.psd_min >= -tol)


def test_m_form_certificate():
    assert check_m_form(np.zeros((2, 1))).verdict == MAXIMAL
    cert = check_m_form([[1.5]])
    assert cert.verdict == NOT_ACCRETIVE
    out, inc = cert.witness["out"], cert.witness["in"]
    assert inc @ inc > out @ out


def test_sampler_zero():
    assert accretivity_sampler(np.zeros((1, 1)), trials=50, h=1e-3) == pytest.approx(0.5, abs=1e-3)


def test_sampler_contraction():
    rng = np.random.default_rng(2)
    M = random_contraction(rng, 3, 1.0)
    assert accretivity_sampler(M, trials=1000, h=1e-3) >= -1e-2


def test_sampler_finds_witness():
    assert accretivity_sampler([[1.5]], trials=10, h=1e-3) < 0


def test_sampler_adjoint_role_swap():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((2, 1))
    M /= np.linalg.norm(M, 2)
    assert accretivity_sampler(M, (1, 1, 0), trials=200, h=1e-2) >= -1e-12
    assert accretivity_sampler(M.T, (1, 0, 1), trials=200, h=1e-2) >= -1e-12
