import numpy as np
import pytest
import scipy.linalg
from scipy.integrate import solve_ivp

from su_steer.integrator import (
    IntegratorConfig,
    integrate,
    read_states_csv,
    step_grid,
    step_left,
    step_right,
    write_states_csv,
)
from su_steer.su_core import MembershipError, det_defect, generator_HI, generator_HR, unitarity_defect


def _field(n=3):
    a = generator_HR(1, 2, n)
    b = generator_HI(2, 3, n)
    c = generator_HR(1, 3, n)
    return lambda t, _y: np.sin(2 * np.pi * t) * a + 2 * np.cos(3 * t) * b + 0.5 * c


def _oracle(F, y0, t1, side="left"):
    n = y0.shape[0]

    def rhs(t, y):
        Y = y.reshape(n, n)
        return (F(t, Y) @ Y if side == "left" else Y @ F(t, Y)).ravel()

    sol = solve_ivp(rhs, (0, t1), y0.ravel(), method="DOP853", rtol=1e-13, atol=1e-13)
    return sol.y[:, -1].reshape(n, n)


def test_constant_generator_is_exact():
    a = 0.7 * generator_HR(1, 2, 2) + 0.2 * generator_HI(1, 2, 2)
    traj = integrate(np.eye(2, dtype=complex), 0.0, 1.0, lambda t, y: a, IntegratorConfig(step=0.1))
    assert np.allclose(traj.final, scipy.linalg.expm(a), atol=1e-13)


@pytest.mark.parametrize("method", ["lie_rk4", "rk4_project"])
def test_matches_reference_solver(method):
    F = _field()
    y0 = np.eye(3, dtype=complex)
    traj = integrate(y0, 0.0, 1.0, F, IntegratorConfig(step=1e-3, method=method))
    assert np.linalg.norm(traj.final - _oracle(F, y0, 1.0)) < 1e-9


def test_right_action_matches_reference_solver():
    F = _field()
    y0 = scipy.linalg.expm(generator_HI(1, 3, 3))
    traj = integrate(y0, 0.0, 1.0, F, IntegratorConfig(step=1e-3), side="right")
    assert np.linalg.norm(traj.final - _oracle(F, y0, 1.0, side="right")) < 1e-9


def test_fourth_order_convergence():
    F = _field()
    y0 = np.eye(3, dtype=complex)
    exact = _oracle(F, y0, 0.5)
    errs = [np.linalg.norm(integrate(y0, 0.0, 0.5, F, IntegratorConfig(step=h)).final - exact)
            for h in (0.05, 0.025, 0.0125)]
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    assert all(r > 12 for r in ratios), (errs, ratios)


def test_group_structure_kept():
    F = _field()
    traj = integrate(np.eye(3, dtype=complex), 0.0, 5.0, F, IntegratorConfig(step=0.05))
    for y in traj.states:
        assert unitarity_defect(y) < 1e-13
        assert det_defect(y) < 1e-13


def test_skew_check_raises():
    bad = lambda t, y: np.eye(2)
    with pytest.raises(MembershipError):
        step_left(np.eye(2, dtype=complex), 0.0, 0.1, bad)
    with pytest.raises(MembershipError):
        step_right(np.eye(2, dtype=complex), 0.0, 0.1, bad)


def test_step_grid_partial_last_step():
    g = step_grid(0.0, 1.05, 0.1)
    assert g[-1] == 1.05 and len(g) == 12
    g = step_grid(0.0, 1.0, 0.1)
    assert g[-1] == 1.0 and len(g) == 11
    with pytest.raises(ValueError):
        step_grid(1.0, 0.0, 0.1)


def test_dense_stride_keeps_endpoint():
    F = _field()
    traj = integrate(np.eye(3, dtype=complex), 0.0, 1.0, F, IntegratorConfig(step=0.01, dense_stride=7))
    assert traj.times[-1] == 1.0
    assert np.allclose(np.diff(traj.times[:-1]), 0.07)


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(step=0)
    with pytest.raises(ValueError):
        IntegratorConfig(dense_stride=0)
    with pytest.raises(ValueError):
        IntegratorConfig(method="euler")


def test_states_csv_roundtrip(tmp_path):
    F = _field()
    traj = integrate(np.eye(3, dtype=complex), 0.0, 0.2, F, IntegratorConfig(step=0.05))
    p = tmp_path / "s.csv"
    write_states_csv(p, traj.times, traj.states)
    header = p.read_text().splitlines()[0].split(",")
    assert header[:3] == ["t", "x_re_11", "x_im_11"]
    t, s = read_states_csv(p)
    assert np.array_equal(t, traj.times)
    assert np.array_equal(s, traj.states)


def test_zero_field_is_identity_map(rng):
    from su_steer.su_core import random_su
    y = random_su(3, rng)
    zero = lambda t, _y: np.zeros((3, 3), dtype=complex)
    assert np.array_equal(step_left(y, 0.0, 0.1, zero), y)
    assert np.allclose(step_right(y, 0.0, 0.1, zero), y, atol=1e-15)


def test_constant_right_action():
    a = 0.4 * generator_HR(1, 2, 3) - 0.9 * generator_HI(1, 3, 3)
    w0 = scipy.linalg.expm(generator_HI(2, 3, 3))
    traj = integrate(w0, 0.0, 2.0, lambda t, y: a, IntegratorConfig(step=0.1), side="right")
    assert np.allclose(traj.final, w0 @ scipy.linalg.expm(2.0 * a), atol=1e-13)


def test_flow_property_constant_system():
    a = 0.4 * generator_HR(1, 2, 3) - 0.9 * generator_HI(1, 3, 3)
    cfg = IntegratorConfig(step=0.01)
    f = lambda t, y: a
    y0 = np.eye(3, dtype=complex)
    mid = integrate(y0, 0.0, 0.7, f, cfg).final
    two = integrate(mid, 0.7, 1.5, f, cfg).final
    one = integrate(y0, 0.0, 1.5, f, cfg).final
    assert np.linalg.norm(two - one) < 5e-13


def test_degenerate_interval_and_stride_sampling():
    F = _field()
    y0 = np.eye(3, dtype=complex)
    single = integrate(y0, 0.3, 0.3, F)
    assert len(single) == 1 and np.array_equal(single.final, y0)
    a = integrate(y0, 0.0, 1.0, F, IntegratorConfig(step=0.01, dense_stride=5))
    b = integrate(y0, 0.0, 1.0, F, IntegratorConfig(step=0.01, dense_stride=10))
    assert len(a) == 21 and len(b) == 11
    assert np.array_equal(a.final, b.final)


def test_order_on_reference_system(H4, abar_fc):
    from su_steer.reference import generator_field
    A = generator_field(abar_fc, H4)
    y0 = np.eye(4, dtype=complex)
    exact = _oracle(A, y0, 0.5)
    errs = [np.linalg.norm(integrate(y0, 0.0, 0.5, A, IntegratorConfig(step=h)).final - exact)
            for h in (1e-2, 5e-3, 2.5e-3)]
    for i in range(2):
        assert 12 <= errs[i] / errs[i + 1] <= 20, errs


def test_long_right_run_stays_unitary():
    F = _field()
    w = np.eye(3, dtype=complex)
    for i in range(100_000):
        w = step_right(w, i * 1e-3, 1e-3, F, check_skew=False)
    assert unitarity_defect(w) <= 1e-10
