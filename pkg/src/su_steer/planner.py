"""Critical levels of ``V`` and the segmented escape procedure.

``compute_G`` enumerates the finite set of values ``sum Re(lambda_i)`` over
unit-modulus ``lambda_i`` with product one and equal imaginary parts; its
largest element below ``n`` is the critical level ``delta``.  Goals with
``V(X_inf) > delta`` are reached by a single auxiliary run.  Other goals
are split along the eigen-phase path ``Zbar(theta) = M^H diag(e^{i lam (1-theta)}) M``
into ``N`` hops that each start above ``delta``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .integrator import IntegratorConfig
from .lyapunov import (
    AuxiliarySystem,
    FeedbackGains,
    Segment,
    TrackingRun,
    assemble_run,
    run_segment,
)
from .reference import Reference, ReferenceTrajectory
from .su_core import (
    EigenPhases,
    check_special_unitary,
    dag,
    fidelity_V,
    frob,
    normalize_det,
    unitary_eigendecomposition,
)

log = logging.getLogger(__name__)


class PlanningError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# critical set

@dataclass(frozen=True)
class Witness:
    """Eigenvalue pattern realising one element of the critical set."""

    n1: int
    n2: int
    theta: float

    def eigenvalues(self) -> np.ndarray:
        return np.array([np.exp(1j * self.theta)] * self.n1 + [np.exp(1j * (np.pi - self.theta))] * self.n2)

    @property
    def value(self) -> float:
        return (self.n1 - self.n2) * math.cos(self.theta)


@dataclass(frozen=True)
class CriticalSet:
    n: int
    values: tuple
    delta: float
    witnesses: dict = field(default_factory=dict, compare=False, repr=False)

    def to_json(self) -> dict:
        return {"n": self.n, "values": [_clean(v) for v in self.values], "delta": _clean(self.delta)}


def _clean(x: float) -> float | int:
    r = round(x)
    if abs(x - r) < 1e-12:
        return int(r)
    return float(x)


def compute_G(n: int, dedupe_tol: float = 1e-12) -> CriticalSet:
    """Enumerate ``G`` by the split ``n = n1 + n2`` of equal-imaginary-part eigenvalues.

    ``n1`` eigenvalues equal ``e^{i theta}`` and ``n2`` equal ``e^{i(pi - theta)}``.
    For ``n1 != n2`` the product constraint pins
    ``theta = (2k - n2) pi / (n - 2 n2)``, which has period ``|n - 2 n2|`` in
    ``k``.  For ``n1 == n2`` the value is 0, admissible only if ``n1`` is even.
    """
    if n < 2:
        raise ValueError("n ≥ 2 required")
    found: list[tuple[float, Witness]] = []
    for n2 in range(n):
        n1 = n - n2
        if n1 == n2:
            if n1 % 2 == 0:
                found.append((0.0, Witness(n1, n2, 0.0)))
            continue
        d = n - 2 * n2
        for k in range(abs(d)):
            theta = (2 * k - n2) * math.pi / d
            w = Witness(n1, n2, theta)
            found.append((w.value, w))
    found.sort(key=lambda p: p[0])
    values: list[float] = []
    witnesses: dict[float, Witness] = {}
    for x, w in found:
        if values and abs(x - values[-1]) <= dedupe_tol:
            continue
        r = round(x)
        x = float(r) if abs(x - r) <= dedupe_tol else x
        values.append(x)
        witnesses[x] = w
    below = [v for v in values if v < n - dedupe_tol]
    delta = max(below) if below else -float(n)
    return CriticalSet(n=n, values=tuple(values), delta=delta, witnesses=witnesses)


# ---------------------------------------------------------------------------
# eigen-phase path

@dataclass
class PathPlan:
    eig: EigenPhases
    N: int
    waypoints: list
    margin: float
    delta: float

    @property
    def phases(self) -> np.ndarray:
        return self.eig.phases

    @property
    def Delta(self) -> float:
        return 1.0 / self.N

    @property
    def hop_fidelity(self) -> float:
        return float(np.sum(np.cos(self.phases * self.Delta)))

    def to_json(self) -> dict:
        return {"phases": self.phases.tolist(), "N": self.N, "Delta": self.Delta, "margin": self.margin,
                "hop_fidelity": self.hop_fidelity}


def path_point(eig: EigenPhases, theta: float) -> np.ndarray:
    return eig.reconstruct(scale=1.0 - theta)


def min_segments(phases: np.ndarray, threshold: float, n_max: int = 100000) -> int:
    for N in range(1, n_max + 1):
        if np.sum(np.cos(phases / N)) > threshold:
            return N
    raise PlanningError(f"no segment count up to {n_max} clears {threshold}")


def build_path(goal: np.ndarray, crit: CriticalSet, margin: float = 0.1, N: int | None = None) -> PathPlan:
    """Split the path from ``goal`` to ``I`` into hops with fidelity above ``delta + margin``."""
    if not margin > 0:
        raise ValueError("margin must be positive")
    goal = normalize_det(goal)
    eig = unitary_eigendecomposition(goal)
    threshold = crit.delta + margin
    if N is None:
        N = min_segments(eig.phases, threshold)
    elif N < 1:
        raise ValueError("N must be >= 1")
    elif not np.sum(np.cos(eig.phases / N)) > threshold:
        raise PlanningError(f"N={N} does not satisfy sum cos(lambda/N) > {threshold}")
    waypoints = [path_point(eig, ell / N) for ell in range(N + 1)]
    waypoints[0] = goal
    waypoints[-1] = np.eye(goal.shape[0], dtype=complex)
    return PathPlan(eig=eig, N=N, waypoints=waypoints, margin=margin, delta=crit.delta)


# ---------------------------------------------------------------------------
# runs

@dataclass(frozen=True)
class PlanConfig:
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    margin: float = 0.1
    eps_seg: float | None = None      # default 0.05 * n
    segment_cap: float | None = None  # default 200 * T
    err_target: float | None = None
    horizon: float | None = None      # final-segment end time when err_target is None
    N: int | None = None

    def to_dict(self) -> dict:
        return {"integrator": self.integrator.to_dict(), "margin": self.margin, "eps_seg": self.eps_seg,
                "segment_cap": self.segment_cap, "err_target": self.err_target, "horizon": self.horizon,
                "N": self.N}


@dataclass
class GluedPlan:
    branch: str
    run: TrackingRun
    switch_times: list
    segments: list
    converged: bool
    path: PathPlan | None = None
    meta: dict = field(default_factory=dict)

    def z_jumps(self) -> list[float]:
        return [s["z_jump"] for s in self.segments[1:]]

    def to_json(self) -> dict:
        d = {
            "branch": self.branch,
            "switch_times": self.switch_times,
            "segments": self.segments,
            "converged": self.converged,
            "final_err": float(self.run.err[-1]),
            "final_V_Z": float(self.run.V_Z[-1]),
            **self.meta,
        }
        if self.path is not None:
            d.update(self.path.to_json())
        else:
            d.update({"N": 1})
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def _final_stop(n: int, err_target: float | None):
    if err_target is None:
        return None
    eye = np.eye(n)
    return lambda t, w: frob(w - eye) <= err_target


def _segment_record(idx: int, seg: Segment, start: np.ndarray, delta: float) -> dict:
    return {
        "index": idx + 1,
        "t_start": float(seg.times[0]),
        "t_end": float(seg.times[-1]),
        "V_W_start": fidelity_V(start),
        "V_W_end": fidelity_V(seg.W[-1]),
        "start_above_delta": bool(fidelity_V(start) > delta),
        "stop_reason": seg.stop_reason,
        "steps": seg.steps,
        "z_jump": 0.0,
    }


def run_algorithm1(goal: np.ndarray, ref_traj: ReferenceTrajectory, gains: FeedbackGains, crit: CriticalSet,
                   cfg: PlanConfig | None = None, btable=None, regular: bool | None = None) -> GluedPlan:
    """Segmented planning along the eigen-phase path.

    Segment ``l`` integrates ``W_l`` from ``Zbar_l^H Zbar_{l-1} W_{l-1}(T_l)``
    and hands over at the first grid point where both
    ``V(Zbar_{l+1}^H Zbar_l W_l) > delta + margin`` and
    ``V(W_l) >= n - eps_seg``.  The last segment runs to ``err_target`` or to
    ``horizon``.  ``Z = Zbar_l W_l`` is glued across the switches.
    """
    cfg = cfg or PlanConfig()
    if regular is False:
        raise PlanningError("reference is not regular; refusing to plan")
    goal = normalize_det(goal)
    ref = Reference(ref_traj, goal)
    ref.require_periodic()
    n = ref.n
    if crit.n != n:
        raise ValueError(f"critical set is for n={crit.n}, goal has n={n}")
    icfg = cfg.integrator
    eps_seg = 0.05 * n if cfg.eps_seg is None else cfg.eps_seg
    cap = 200.0 * ref.period if cfg.segment_cap is None else cfg.segment_cap
    path = build_path(goal, crit, cfg.margin, cfg.N)
    zb = path.waypoints
    N = path.N
    aux = AuxiliarySystem(ref, gains)
    threshold = crit.delta + cfg.margin

    pieces: list[tuple[np.ndarray, Segment]] = []
    records: list[dict] = []
    switch_times = [0.0]
    w_prev_end = np.eye(n, dtype=complex)
    t_start = 0.0
    converged = True
    for ell in range(1, N + 1):
        w0 = dag(zb[ell]) @ zb[ell - 1] @ w_prev_end
        if ell < N:
            hop = dag(zb[ell + 1]) @ zb[ell]
            stop = lambda t, w, hop=hop: (fidelity_V(hop @ w) > threshold and fidelity_V(w) >= n - eps_seg)
            seg = run_segment(aux, w0, t_start, t_start + cap, icfg, stop)
            if seg.stop_reason != "stop_rule":
                raise PlanningError(
                    f"segment {ell} hit the horizon cap {cap:g} at V(W) = {fidelity_V(seg.W[-1]):.6g} "
                    f"(needs >= {n - eps_seg:.6g} and hop fidelity > {threshold:.6g})"
                )
        else:
            t_end = t_start + cap
            if cfg.err_target is None and cfg.horizon is not None:
                t_end = max(cfg.horizon, t_start)
            seg = run_segment(aux, w0, t_start, t_end, icfg, _final_stop(n, cfg.err_target))
            if cfg.err_target is not None and seg.stop_reason != "stop_rule":
                converged = False
                log.warning("final segment reached t=%g without meeting err_target=%g", t_end, cfg.err_target)
        rec = _segment_record(ell - 1, seg, w0, crit.delta)
        if pieces:
            zbar_prev, prev = pieces[-1]
            rec["z_jump"] = frob(zbar_prev @ prev.W[-1] - zb[ell] @ w0)
        records.append(rec)
        pieces.append((zb[ell], seg))
        w_prev_end = seg.W[-1]
        t_start = float(seg.times[-1])
        if ell < N:
            switch_times.append(t_start)

    run = assemble_run(ref, gains, pieces, btable)
    meta = {"delta": crit.delta, "V_goal": fidelity_V(goal), "eps_seg": eps_seg, "segment_cap": cap,
            "config": cfg.to_dict(), "gains": list(gains.f)}
    run.meta.update({"branch": "algorithm1", **meta})
    return GluedPlan(branch="algorithm1", run=run, switch_times=switch_times, segments=records,
                     converged=converged, path=path, meta=meta)


def run_direct(goal: np.ndarray, ref_traj: ReferenceTrajectory, gains: FeedbackGains, crit: CriticalSet,
               cfg: PlanConfig | None = None, btable=None) -> GluedPlan:
    cfg = cfg or PlanConfig()
    goal = normalize_det(goal)
    ref = Reference(ref_traj, goal)
    ref.require_periodic()
    n = ref.n
    cap = 200.0 * ref.period if cfg.segment_cap is None else cfg.segment_cap
    t_end = cap
    if cfg.err_target is None and cfg.horizon is not None:
        t_end = cfg.horizon
    aux = AuxiliarySystem(ref, gains)
    seg = run_segment(aux, goal, 0.0, t_end, cfg.integrator, _final_stop(n, cfg.err_target))
    converged = cfg.err_target is None or seg.stop_reason == "stop_rule"
    run = assemble_run(ref, gains, [(np.eye(n, dtype=complex), seg)], btable)
    meta = {"delta": crit.delta, "V_goal": fidelity_V(goal), "segment_cap": cap, "config": cfg.to_dict(),
            "gains": list(gains.f)}
    run.meta.update({"branch": "direct", **meta})
    return GluedPlan(branch="direct", run=run, switch_times=[0.0],
                     segments=[_segment_record(0, seg, goal, crit.delta)], converged=converged, meta=meta)


def choose_branch(goal: np.ndarray, crit: CriticalSet, margin: float) -> str:
    """``"direct"`` strictly above ``delta + margin``; the boundary band goes to the segmented branch."""
    return "direct" if fidelity_V(goal) > crit.delta + margin else "algorithm1"


def plan(goal: np.ndarray, ref_traj: ReferenceTrajectory, gains: FeedbackGains, cfg: PlanConfig | None = None,
         btable=None, regular: bool | None = None) -> GluedPlan:
    """Dispatch on ``V(goal)``: direct above ``delta + margin``, segmented otherwise."""
    cfg = cfg or PlanConfig()
    goal = check_special_unitary(goal, "goal")
    crit = compute_G(goal.shape[0])
    if regular is False:
        raise PlanningError("reference is not regular; refusing to plan")
    if choose_branch(goal, crit, cfg.margin) == "direct":
        return run_direct(goal, ref_traj, gains, crit, cfg, btable)
    return run_algorithm1(goal, ref_traj, gains, crit, cfg, btable)
