import csv

import numpy as np
import pytest

from su_steer.integrator import IntegratorConfig
from su_steer.lyapunov import (
    AuxiliarySystem,
    FeedbackGains,
    TrackingError,
    auxiliary_rhs,
    e_residual,
    energy_slope_defect,
    f_membership_gap,
    feedback_a,
    reconstruct_open_loop,
    simulate_tracking,
)
from su_steer.reference import Reference, taylor_B_at_zero
from su_steer.su_core import fidelity_V, frob, random_su

H_STEP = 1e-3


@pytest.fixture(scope="module")
def short_run(cnot_goal, cnot_ref):
    return simulate_tracking(cnot_goal, cnot_ref, FeedbackGains.uniform(6), 2.0, IntegratorConfig(step=H_STEP))


def test_gains_validation():
    with pytest.raises(ValueError):
        FeedbackGains((1.0, 0.0))
    with pytest.raises(ValueError):
        FeedbackGains((np.inf,))
    with pytest.raises(ValueError):
        FeedbackGains(())
    assert len(FeedbackGains.uniform(3, 2.0)) == 3


def test_gain_count_must_match(cnot_goal, cnot_ref):
    with pytest.raises(ValueError):
        AuxiliarySystem(Reference(cnot_ref, cnot_goal), FeedbackGains.uniform(5))


def test_feedback_vector_matches_scalar_form(cnot_goal, cnot_ref, rng):
    ref = Reference(cnot_ref, cnot_goal)
    gains = FeedbackGains(tuple(rng.uniform(0.5, 2.0, 6)))
    aux = AuxiliarySystem(ref, gains)
    w = random_su(4, rng)
    a = aux.feedback(0.37, w)
    for k in range(6):
        assert a[k] == pytest.approx(feedback_a(0.37, w, k, ref, gains), abs=1e-13)
    with pytest.raises(IndexError):
        feedback_a(0.0, w, 6, ref, gains)


def test_lyapunov_rate_is_sum_of_squares(cnot_goal, cnot_ref, rng):
    # d/dt Re tr W = Re tr(W G) with G the right generator; it must equal sum a_k^2
    ref = Reference(cnot_ref, cnot_goal)
    gains = FeedbackGains(tuple(rng.uniform(0.5, 2.0, 6)))
    for t in (0.0, 0.21, 0.77):
        w = random_su(4, rng)
        g = auxiliary_rhs(t, w, ref, gains)
        a = AuxiliarySystem(ref, gains).feedback(t, w)
        assert np.trace(w @ g).real == pytest.approx(np.sum(a ** 2), rel=1e-12, abs=1e-12)
        assert frob(g + g.conj().T) < 1e-12


def test_direct_branch_rejects_low_fidelity_goal(cnot_ref):
    with pytest.raises(TrackingError):
        simulate_tracking(-np.eye(4, dtype=complex), cnot_ref, FeedbackGains.uniform(6), 1.0)


def test_short_run_properties(short_run):
    run = short_run
    assert run.err[0] == pytest.approx(2.0)
    assert np.all(np.diff(run.err) <= 1e-9)
    assert run.identity_defect() < 1e-9
    assert run.monotonicity_violation() == 0.0
    assert energy_slope_defect(run, H_STEP) < 10 * H_STEP
    # open-loop bookkeeping
    f = np.ones(6)
    assert np.allclose(run.v, f * run.a)
    assert np.allclose(run.u + run.v, _ref_controls(run), atol=1e-12)
    assert np.allclose(run.X, run.Xr @ np.conj(np.transpose(run.Z, (0, 2, 1))))


def _ref_controls(run):
    from su_steer.config import ABAR
    w = 2 * np.pi * np.arange(1, 6)
    return np.array([ABAR @ np.sin(w * t) for t in run.times])


def test_larger_gains_keep_identities(cnot_goal, cnot_ref):
    run = simulate_tracking(cnot_goal, cnot_ref, FeedbackGains.uniform(6, 4.0), 1.0, IntegratorConfig(step=H_STEP))
    assert np.all(np.diff(run.V_Z) >= -1e-9)
    assert energy_slope_defect(run, H_STEP) < 10 * H_STEP


def test_err_target_stops_early(cnot_goal, cnot_ref):
    run = simulate_tracking(cnot_goal, cnot_ref, FeedbackGains.uniform(6), 5.0, IntegratorConfig(step=H_STEP),
                            err_target=1.5)
    assert run.meta["stop_reason"] == "stop_rule"
    assert run.err[-1] <= 1.5 < run.err[-2]


def test_open_loop_reconstruction(short_run, H4):
    x_end = short_run.X[-1]
    # a held control is only first-order accurate in the sample spacing
    assert frob(reconstruct_open_loop(short_run, H4, "zoh") - x_end) < 1e-3
    assert frob(reconstruct_open_loop(short_run, H4, "spline") - x_end) < 1e-6
    with pytest.raises(ValueError):
        reconstruct_open_loop(short_run, H4, "linear")


def test_run_csv_columns(short_run, tmp_path):
    p = tmp_path / "run.csv"
    short_run.write_run_csv(p)
    with open(p) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "err", "V_Z"] + [f"u_{k}" for k in range(1, 7)] + [f"v_{k}" for k in range(1, 7)]
    assert len(rows) == len(short_run.times) + 1
    q = tmp_path / "states.csv"
    short_run.write_states_csv(q, stride=500)
    lines = q.read_text().splitlines()
    assert len(lines) == 1 + 5  # t = 0, 0.5, 1, 1.5, 2
    assert len(lines[0].split(",")) == 1 + 3 * 32


def test_f_membership_gap_examples():
    assert f_membership_gap(np.eye(3)) == 0.0
    th = 0.4
    assert f_membership_gap(np.diag([np.exp(1j * th), np.exp(-1j * th)])) == pytest.approx(2 * np.sin(th))
    # equal imaginary parts: e^{i th} and e^{i (pi - th)}
    w = np.diag([np.exp(1j * th), np.exp(1j * (np.pi - th))])
    assert f_membership_gap(w) == pytest.approx(0.0, abs=1e-15)


def test_e_residual_vanishes_at_identity(H4, abar_fc, cnot_goal):
    table = taylor_B_at_zero(abar_fc, H4, 4)
    assert e_residual(np.eye(4), table, cnot_goal) < 1e-9
    assert e_residual(cnot_goal.conj().T @ np.diag([1j, 1j, -1j, -1j]) @ cnot_goal, table, cnot_goal) > 0
    with pytest.raises(ValueError):
        e_residual(np.eye(4), [], cnot_goal)
