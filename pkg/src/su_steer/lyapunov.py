"""Lyapunov-like tracking on SU(n).

The tracking error ``Z = X^H X_r`` obeys ``Z' = Z X_r^H (sum_k v_k H_k) X_r``
where ``v_k = u_k^T - u_k``.  Choosing ``v_k = f_k a_k(t, Z)`` with

    a_k(t, W) = f_k Re tr(W X_r(t)^H H_k X_r(t))

turns it into the auxiliary system ``W' = W X_r^H (sum_k f_k a_k H_k) X_r``,
along which ``V(W) = Re tr W`` grows at rate ``sum_k a_k**2``.  Here the
auxiliary system is integrated and the open-loop data (``u``, ``v``, ``X``)
are reconstructed from it.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .integrator import IntegratorConfig, fmt, state_columns, step_grid, step_right
from .reference import Reference, ReferenceTrajectory
from .su_core import dag, expm_skew, fidelity_V, frob


class TrackingError(RuntimeError):
    pass


@dataclass(frozen=True)
class FeedbackGains:
    f: tuple

    def __post_init__(self):
        f = tuple(float(x) for x in self.f)
        if not f:
            raise ValueError("at least one gain is required")
        if any(x == 0 or not np.isfinite(x) for x in f):
            raise ValueError(f"every gain must be a finite non-zero real, got {f}")
        object.__setattr__(self, "f", f)

    @classmethod
    def uniform(cls, m: int, value: float = 1.0) -> "FeedbackGains":
        return cls(tuple([value] * m))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.f)

    def __len__(self) -> int:
        return len(self.f)


class AuxiliarySystem:
    """Right-hand side of the auxiliary system for a fixed reference."""

    def __init__(self, ref: Reference, gains: FeedbackGains):
        if len(gains) != ref.H.shape[0]:
            raise ValueError(f"{len(gains)} gains for {ref.H.shape[0]} generators")
        self.ref = ref
        self.gains = gains
        self.f = gains.array
        self.H = ref.H
        self.n = ref.n
        self._hflat = self.H.reshape(len(self.f), -1)

    def feedback(self, t: float, w: np.ndarray, xr: np.ndarray | None = None) -> np.ndarray:
        """All ``a_k(t, W)`` at once."""
        if xr is None:
            xr = self.ref(t)
        p = xr @ w @ dag(xr)
        # Re tr(H_k P) = Re sum_ij H_k[i, j] P[j, i]
        return self.f * (self._hflat @ p.T.ravel()).real

    def rhs(self, t: float, w: np.ndarray) -> np.ndarray:
        xr = self.ref(t)
        c = self.f * self.feedback(t, w, xr)
        g = (c @ self._hflat).reshape(self.n, self.n)
        return dag(xr) @ g @ xr

    __call__ = rhs


def feedback_a(t: float, w: np.ndarray, k: int, ref: Reference, gains: FeedbackGains) -> float:
    """``a_k(t, W) = f_k V(W X_r(t)^H H_k X_r(t))`` for 0-based ``k``."""
    if not 0 <= k < len(gains):
        raise IndexError(f"control index {k} out of range for m={len(gains)}")
    xr = ref(t)
    return gains.f[k] * fidelity_V(w @ dag(xr) @ ref.H[k] @ xr)


def auxiliary_rhs(t: float, w: np.ndarray, ref: Reference, gains: FeedbackGains) -> np.ndarray:
    return AuxiliarySystem(ref, gains).rhs(t, w)


# ---------------------------------------------------------------------------
# invariance diagnostics

def conjugated_B(btable: Sequence[Sequence[np.ndarray]], goal: np.ndarray) -> np.ndarray:
    """Stack ``X_inf^H B^j_k(0) X_inf`` for every stored ``(j, k)``."""
    bs = [dag(goal) @ b @ goal for row in btable for b in row]
    if not bs:
        raise ValueError("empty B table")
    return np.array(bs)


def e_residual(w: np.ndarray, btable, goal: np.ndarray) -> float:
    """``max_{j,k} |V(W X_inf^H B^j_k(0) X_inf)|`` over the stored table."""
    cb = conjugated_B(btable, goal)
    vals = (cb.reshape(len(cb), -1) @ np.asarray(w).T.ravel()).real
    return float(np.max(np.abs(vals)))


def f_membership_gap(w: np.ndarray) -> float:
    """Spread of the imaginary parts of the eigenvalues of ``W``."""
    im = np.linalg.eigvals(np.asarray(w)).imag
    return float(im.max() - im.min())


# ---------------------------------------------------------------------------
# runs

@dataclass
class Segment:
    """Raw auxiliary-system samples of one segment."""

    times: np.ndarray
    W: np.ndarray
    a: np.ndarray
    stop_reason: str
    steps: int


def run_segment(aux: AuxiliarySystem, w0: np.ndarray, t0: float, t_max: float, cfg: IntegratorConfig,
                stop: Callable[[float, np.ndarray], bool] | None = None) -> Segment:
    """March the auxiliary system from ``(t0, w0)`` until ``stop`` fires or ``t_max``.

    ``stop`` is polled at every grid point after the first; the stopping
    point is always recorded, even off the ``dense_stride`` pattern.
    """
    grid = step_grid(t0, t_max, cfg.step)
    w = np.asarray(w0, dtype=complex)
    times, ws, avals = [float(grid[0])], [w], [aux.feedback(grid[0], w)]
    reason = "horizon"
    i = 0
    for i in range(1, len(grid)):
        t_prev, t = float(grid[i - 1]), float(grid[i])
        w = step_right(w, t_prev, t - t_prev, aux.rhs, cfg.method, cfg.check_skew)
        fired = stop is not None and stop(t, w)
        if i % cfg.dense_stride == 0 or fired or i == len(grid) - 1:
            times.append(t)
            ws.append(w)
            avals.append(aux.feedback(t, w))
        if fired:
            reason = "stop_rule"
            break
    return Segment(np.array(times), np.array(ws), np.array(avals), reason, i)


@dataclass
class TrackingRun:
    times: np.ndarray
    X: np.ndarray
    Xr: np.ndarray
    Z: np.ndarray
    W: np.ndarray
    u: np.ndarray
    v: np.ndarray
    a: np.ndarray
    err: np.ndarray
    V_Z: np.ndarray
    V_W: np.ndarray
    segment: np.ndarray
    e_residual: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.Z.shape[1]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    def run_columns(self) -> list[str]:
        return (["t", "err", "V_Z"] + [f"u_{k}" for k in range(1, self.m + 1)]
                + [f"v_{k}" for k in range(1, self.m + 1)])

    def write_run_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(self.run_columns())
            for i, t in enumerate(self.times):
                row = [t, self.err[i], self.V_Z[i], *self.u[i], *self.v[i]]
                wr.writerow([fmt(x) for x in row])

    def write_states_csv(self, path, stride: int = 1) -> None:
        """Full ``X``, ``X_r``, ``Z`` every ``stride`` samples (the last sample is always kept)."""
        n = self.n
        keep = list(range(0, len(self.times), stride))
        if keep[-1] != len(self.times) - 1:
            keep.append(len(self.times) - 1)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t"] + state_columns(n, "x") + state_columns(n, "xr") + state_columns(n, "z"))
            for i in keep:
                t = self.times[i]
                row = [t]
                for mat in (self.X[i], self.Xr[i], self.Z[i]):
                    flat = np.empty(2 * n * n)
                    flat[0::2] = mat.real.ravel()
                    flat[1::2] = mat.imag.ravel()
                    row.extend(flat)
                wr.writerow([fmt(x) for x in row])

    def write_diagnostics_csv(self, path) -> None:
        """Per-sample ``segment, V_W, sum a_k^2`` and, when available, the E-residual."""
        a2 = np.sum(self.a ** 2, axis=1)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "segment", "V_W", "a_sq"] + (["e_residual"] if self.e_residual is not None else []))
            for i, t in enumerate(self.times):
                row = [fmt(t), str(int(self.segment[i]) + 1), fmt(self.V_W[i]), fmt(a2[i])]
                if self.e_residual is not None:
                    row.append(fmt(self.e_residual[i]))
                wr.writerow(row)

    def identity_defect(self) -> float:
        """``max |err^2 - (2n - 2 V(Z))|`` over samples."""
        return float(np.max(np.abs(self.err ** 2 - (2 * self.n - 2 * self.V_Z))))

    def monotonicity_violation(self) -> float:
        """Largest per-segment drop of ``V(W)`` between consecutive samples (0 if none)."""
        worst = 0.0
        for s in np.unique(self.segment):
            vw = self.V_W[self.segment == s]
            if len(vw) > 1:
                worst = max(worst, float(np.max(vw[:-1] - vw[1:])))
        return max(worst, 0.0)


def assemble_run(ref: Reference, gains: FeedbackGains, pieces: Sequence[tuple[np.ndarray, Segment]],
                 btable=None) -> TrackingRun:
    """Glue segments ``(Zbar_l, seg_l)`` into one run with ``Z = Zbar_l W_l``.

    Each segment owns ``[T_l, T_{l+1})``: its last sample is dropped unless it
    is the final segment.
    """
    f = gains.array
    cols = {k: [] for k in ("t", "X", "Xr", "Z", "W", "u", "v", "a", "seg")}
    for idx, (zbar, seg) in enumerate(pieces):
        last = idx == len(pieces) - 1
        count = len(seg.times) if last else len(seg.times) - 1
        for i in range(count):
            t = float(seg.times[i])
            xr = ref(t)
            z = zbar @ seg.W[i]
            v = f * seg.a[i]
            cols["t"].append(t)
            cols["Xr"].append(xr)
            cols["Z"].append(z)
            cols["W"].append(seg.W[i])
            cols["X"].append(xr @ dag(z))
            cols["a"].append(seg.a[i])
            cols["v"].append(v)
            cols["u"].append(ref.fc(t) - v)
            cols["seg"].append(idx)
    X = np.array(cols["X"])
    Xr = np.array(cols["Xr"])
    Z = np.array(cols["Z"])
    W = np.array(cols["W"])
    err = np.linalg.norm(X - Xr, axis=(1, 2))
    V_Z = np.trace(Z, axis1=1, axis2=2).real
    V_W = np.trace(W, axis1=1, axis2=2).real
    e_res = None
    if btable is not None:
        cb = conjugated_B(btable, ref.goal)
        cbf = cb.reshape(len(cb), -1)
        e_res = np.array([np.max(np.abs((cbf @ w.T.ravel()).real)) for w in W])
    return TrackingRun(times=np.array(cols["t"]), X=X, Xr=Xr, Z=Z, W=W, u=np.array(cols["u"]),
                       v=np.array(cols["v"]), a=np.array(cols["a"]), err=err, V_Z=V_Z, V_W=V_W,
                       segment=np.array(cols["seg"]), e_residual=e_res)


def simulate_tracking(goal: np.ndarray, ref_traj: ReferenceTrajectory, gains: FeedbackGains, horizon: float,
                      cfg: IntegratorConfig | None = None, delta: float | None = None,
                      err_target: float | None = None, btable=None) -> TrackingRun:
    """Direct branch: one auxiliary run from ``W(0) = X_inf``.

    ``delta`` defaults to the critical level for ``n``; goals with
    ``V(X_inf) <= delta`` are rejected (use the planner instead).  With
    ``err_target`` the run stops at the first sample where the tracking error
    falls to the target.
    """
    cfg = cfg or IntegratorConfig()
    ref = Reference(ref_traj, goal)
    ref.require_periodic()
    n = ref.n
    if delta is None:
        from .planner import compute_G
        delta = compute_G(n).delta
    v0 = fidelity_V(ref.goal)
    if not v0 > delta:
        raise TrackingError(f"V(goal) = {v0:.6g} <= delta = {delta:.6g}; the direct branch does not apply")
    aux = AuxiliarySystem(ref, gains)
    stop = None
    if err_target is not None:
        eye = np.eye(n)
        stop = lambda t, w: frob(w - eye) <= err_target
    seg = run_segment(aux, ref.goal, 0.0, horizon, cfg, stop)
    run = assemble_run(ref, gains, [(np.eye(n, dtype=complex), seg)], btable)
    run.meta.update({
        "branch": "direct",
        "horizon": horizon,
        "err_target": err_target,
        "stop_reason": seg.stop_reason,
        "gains": list(gains.f),
        "integrator": cfg.to_dict(),
        "delta": delta,
        "V_goal": v0,
    })
    return run


def energy_slope_defect(run: TrackingRun, h: float) -> float:
    """Largest gap between central-difference ``dV(W)/dt`` and ``sum_k a_k**2``.

    Only interior samples of a segment with uniform spacing ``h`` are used.
    """
    worst = 0.0
    for s in np.unique(run.segment):
        idx = np.nonzero(run.segment == s)[0]
        t = run.times[idx]
        vw = run.V_W[idx]
        a2 = np.sum(run.a[idx] ** 2, axis=1)
        for i in range(1, len(idx) - 1):
            if abs((t[i + 1] - t[i]) - h) > 1e-9 or abs((t[i] - t[i - 1]) - h) > 1e-9:
                continue
            slope = (vw[i + 1] - vw[i - 1]) / (2 * h)
            worst = max(worst, abs(slope - a2[i]))
    return worst


def run_meta_json(run: TrackingRun) -> str:
    return json.dumps(run.meta, indent=2, sort_keys=True)


def reconstruct_open_loop(run: TrackingRun, H: np.ndarray, hold: str = "zoh", x0: np.ndarray | None = None,
                          rtol: float = 1e-12) -> np.ndarray:
    """Re-integrate ``X' = sum_k u_k H_k X`` from the emitted controls; returns ``X`` at the last sample.

    ``hold="zoh"`` holds ``u`` at each sample over the following interval and
    propagates with exact exponentials.  ``hold="spline"`` interpolates ``u``
    with a cubic spline per segment and hands the ODE to scipy's DOP853.
    """
    H = np.asarray(H)
    n = H.shape[1]
    x = np.eye(n, dtype=complex) if x0 is None else np.asarray(x0, dtype=complex)
    t, u = run.times, run.u
    if hold == "zoh":
        for i in range(len(t) - 1):
            x = expm_skew((t[i + 1] - t[i]) * np.tensordot(u[i], H, axes=1)) @ x
        return x
    if hold != "spline":
        raise ValueError(f"unknown hold {hold!r}")
    from scipy.integrate import solve_ivp
    from scipy.interpolate import CubicSpline

    segs = list(dict.fromkeys(run.segment.tolist()))
    for j, s in enumerate(segs):
        idx = np.nonzero(run.segment == s)[0]
        t_end = t[-1] if j == len(segs) - 1 else t[np.nonzero(run.segment == segs[j + 1])[0][0]]
        if len(idx) < 2:
            x = expm_skew((t_end - t[idx[0]]) * np.tensordot(u[idx[0]], H, axes=1)) @ x
            continue
        cs = CubicSpline(t[idx], u[idx])

        def rhs(tt, y, cs=cs):
            return (np.tensordot(cs(tt), H, axes=1) @ y.reshape(n, n)).ravel()

        sol = solve_ivp(rhs, (t[idx[0]], t_end), x.ravel(), method="DOP853", rtol=rtol, atol=rtol)
        if not sol.success:
            raise TrackingError(f"reconstruction failed: {sol.message}")
        x = sol.y[:, -1].reshape(n, n)
    return x
