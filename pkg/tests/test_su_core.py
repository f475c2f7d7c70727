import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from su_steer.su_core import (
    EigenDecompositionError,
    MembershipError,
    canonical_diagonals,
    check_special_unitary,
    check_su_element,
    commutator,
    det_defect,
    expm,
    expm_skew,
    fidelity_V,
    generator_HI,
    generator_HR,
    is_special_unitary,
    is_su_element,
    lie_closure_dim,
    matrix_from_json,
    matrix_to_json,
    normalize_det,
    numerical_rank,
    project_su,
    random_su,
    unitarity_defect,
    unitary_eigendecomposition,
    zero_sum_phases,
)


def test_generator_entries():
    hr = generator_HR(1, 3, 4)
    hi = generator_HI(2, 4, 4)
    assert hr[0, 2] == 1 and hr[2, 0] == -1 and np.count_nonzero(hr) == 2
    assert hi[1, 3] == 1j and hi[3, 1] == 1j and np.count_nonzero(hi) == 2
    assert is_su_element(hr) and is_su_element(hi)


@pytest.mark.parametrize("i,j,n", [(2, 1, 3), (1, 1, 3), (0, 2, 3), (1, 4, 3)])
def test_generator_bad_indices(i, j, n):
    with pytest.raises(ValueError):
        generator_HR(i, j, n)
    with pytest.raises(ValueError):
        generator_HI(i, j, n)


def test_canonical_diagonals_are_traceless_skew():
    for n in range(2, 6):
        ds = canonical_diagonals(n)
        assert len(ds) == n
        for d in ds:
            assert is_su_element(d)
    with pytest.raises(ValueError):
        canonical_diagonals(1)


def test_expm_rotation_closed_form():
    # exp(theta (E_12 - E_21)) is a plane rotation
    theta = 0.731
    r = expm(theta * generator_HR(1, 2, 2))
    expected = np.array([[np.cos(theta), np.sin(theta)], [-np.sin(theta), np.cos(theta)]])
    assert np.allclose(r, expected, atol=1e-14)
    # exp(theta * i (E_12 + E_21)) = cos + i sin sigma_x
    s = expm(theta * generator_HI(1, 2, 2))
    assert np.allclose(s, [[np.cos(theta), 1j * np.sin(theta)], [1j * np.sin(theta), np.cos(theta)]], atol=1e-14)


def test_expm_rejects_nonfinite():
    with pytest.raises(ValueError):
        expm(np.array([[np.nan, 0], [0, 0]]))


def test_expm_skew_matches_scipy(rng):
    for n in (2, 3, 4, 6):
        a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        a = a - a.conj().T
        a -= np.trace(a) / n * np.eye(n)
        e = expm_skew(3.0 * a)
        assert np.allclose(e, scipy.linalg.expm(3.0 * a), atol=1e-11)
        assert unitarity_defect(e) < 1e-13
        assert det_defect(e) < 1e-12


def test_fidelity_identity_is_max(rng):
    for n in (2, 3, 4):
        assert fidelity_V(np.eye(n)) == n
        for _ in range(20):
            assert fidelity_V(random_su(n, rng)) < n


def test_membership_checks():
    with pytest.raises(MembershipError):
        check_special_unitary(2 * np.eye(2))
    with pytest.raises(MembershipError):
        check_special_unitary(1j * np.eye(2))  # det = -1
    with pytest.raises(MembershipError):
        check_su_element(np.eye(2))
    assert not is_special_unitary(np.diag([1, 1, -1]))


def test_project_su_removes_global_phase(rng):
    u = random_su(3, rng)
    v = project_su(u * np.exp(0.3j))
    assert det_defect(v) < 1e-12
    assert np.allclose(v, u * np.exp(2j * np.pi * round(0.9 / (2 * np.pi)) / 3), atol=1e-12)
    assert det_defect(normalize_det(random_su(4, rng))) < 1e-12


def test_commutator_antisymmetry(rng):
    a = random_su(3, rng)
    b = random_su(3, rng)
    assert np.allclose(commutator(a, b), -commutator(b, a))


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_eigendecomposition_roundtrip(n, rng):
    for _ in range(10):
        w = random_su(n, rng)
        ep = unitary_eigendecomposition(w)
        assert abs(ep.phases.sum()) < 1e-12
        assert np.allclose(ep.reconstruct(), w, atol=1e-10)
        assert unitarity_defect(ep.basis) < 1e-10


def test_eigendecomposition_minus_identity():
    ep = unitary_eigendecomposition(-np.eye(4, dtype=complex))
    assert sorted(ep.phases.tolist()) == pytest.approx([-np.pi, -np.pi, np.pi, np.pi])
    assert np.allclose(ep.reconstruct(0.5), ep.basis.conj().T @ np.diag(np.exp(0.5j * ep.phases)) @ ep.basis)


def test_eigendecomposition_rejects_non_su():
    with pytest.raises(MembershipError):
        unitary_eigendecomposition(np.diag([1, 1, 2.0]))
    assert issubclass(EigenDecompositionError, Exception)


def test_zero_sum_phases_shifts_largest():
    raw = np.array([3.0, 2.5, 2.0, -1.217])  # sum = 2 pi within rounding
    raw[-1] = 2 * np.pi - raw[:-1].sum()
    lam = zero_sum_phases(raw)
    assert lam.sum() == pytest.approx(0, abs=1e-15)
    assert lam[0] == pytest.approx(3.0 - 2 * np.pi)
    assert np.allclose(np.exp(1j * lam), np.exp(1j * raw))


def test_lie_closure_dims():
    assert lie_closure_dim([generator_HR(1, 2, 2)]) == 1
    assert lie_closure_dim([generator_HR(1, 2, 2), generator_HI(1, 2, 2)]) == 3
    # a chain of real generators closes to so(n)
    n = 4
    chain = [generator_HR(i, i + 1, n) for i in range(1, n)]
    assert lie_closure_dim(chain, n) == n * (n - 1) // 2
    full = [generator_HR(1, j, n) for j in range(2, n + 1)] + [generator_HI(1, 2, n)]
    assert lie_closure_dim(full, n) == n * n - 1


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(min_value=1e-6, max_value=1e6), min_size=4, max_size=4))
def test_rank_is_scale_invariant(scales):
    base = [generator_HR(1, 2, 3), generator_HI(1, 2, 3), generator_HR(1, 3, 3),
            generator_HR(1, 2, 3) + generator_HI(1, 2, 3)]
    scaled = [s * b for s, b in zip(scales, base)]
    assert numerical_rank(scaled) == numerical_rank(base) == 3


def test_rank_of_zero_vectors():
    assert numerical_rank([np.zeros((2, 2))]) == 0


def test_json_roundtrip(rng):
    m = random_su(3, rng)
    assert np.array_equal(matrix_from_json(matrix_to_json(m)), m)


def test_eigendecomposition_hundred_su4_samples():
    rng = np.random.default_rng(100)
    worst = max(np.linalg.norm(unitary_eigendecomposition(w).reconstruct() - w)
                for w in (random_su(4, rng) for _ in range(100)))
    assert worst <= 1e-9


def test_eigendecomposition_degenerate_cnot():
    from su_steer.config import CNOT
    ep = unitary_eigendecomposition(CNOT)
    assert np.allclose(ep.reconstruct(), CNOT, atol=1e-12)
    assert np.sum(np.abs(ep.phases) < 1e-12) == 2  # eigenvalue 1 twice
