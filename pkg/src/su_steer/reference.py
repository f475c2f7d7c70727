"""Periodic reference trajectories built from odd Fourier controls.

The core trajectory ``X_r^T`` solves ``X' = A(t) X`` with ``X(0) = I`` and
``A(t) = sum_k u_k(t) H_k`` where every ``u_k`` is a pure sine series of
period ``T``.  Odd controls make ``X_r^T`` itself ``T``-periodic.  The goal
enters only as a right factor: ``X_r(t) = X_r^T(t mod T) X_inf``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .integrator import IntegratorConfig, Trajectory, integrate
from .su_core import (
    RANK_TOL,
    MembershipError,
    check_special_unitary,
    frob,
    lie_closure_dim,
    polar_unitary,
    singular_values,
)

log = logging.getLogger(__name__)

TAU_PERIODIC = 1e-7
PLANNER_PERIODIC_GATE = 1e-5


class ReferenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class FourierControl:
    """``u_k(t) = sum_l coeffs[k, l-1] * sin(2*pi*l*t/T)``."""

    T: float
    coeffs: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        object.__setattr__(self, "coeffs", c)
        if not self.T > 0:
            raise ValueError(f"period must be positive, got {self.T}")

    @property
    def m(self) -> int:
        return self.coeffs.shape[0]

    @property
    def n_f(self) -> int:
        return self.coeffs.shape[1]

    @property
    def omegas(self) -> np.ndarray:
        return 2 * np.pi * np.arange(1, self.n_f + 1) / self.T

    def __call__(self, t: float) -> np.ndarray:
        return self.coeffs @ np.sin(self.omegas * t)

    def derivative(self, t: float, order: int) -> np.ndarray:
        """Exact ``order``-th time derivative of every control at ``t``."""
        w = self.omegas
        return self.coeffs @ (w ** order * np.sin(w * t + order * np.pi / 2))

    def taylor_at_zero(self, degree: int) -> np.ndarray:
        """Taylor coefficients ``u_k^(q)(0)/q!``, shape ``(degree+1, m)``.

        Only odd powers survive for a sine series.
        """
        w = self.omegas
        out = np.zeros((degree + 1, self.m))
        for q in range(1, degree + 1, 2):
            sign = 1.0 if q % 4 == 1 else -1.0
            out[q] = sign * (self.coeffs @ w ** q) / math.factorial(q)
        return out

    @classmethod
    def random(cls, m: int, n_f: int = 5, a: float = 5.0, T: float = 1.0, seed: int = 0) -> "FourierControl":
        rng = np.random.default_rng(seed)
        return cls(T=T, coeffs=rng.uniform(-a, a, size=(m, n_f)), seed=seed)

    @classmethod
    def zeros(cls, m: int, n_f: int = 1, T: float = 1.0) -> "FourierControl":
        return cls(T=T, coeffs=np.zeros((m, n_f)))

    def to_json(self) -> dict:
        d = {"T": self.T, "m": self.m, "n_f": self.n_f, "coeffs": self.coeffs.tolist()}
        if self.seed is not None:
            d["seed"] = self.seed
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "FourierControl":
        fc = cls(T=float(obj["T"]), coeffs=np.asarray(obj["coeffs"], dtype=float), seed=obj.get("seed"))
        if "m" in obj and int(obj["m"]) != fc.m or "n_f" in obj and int(obj["n_f"]) != fc.n_f:
            raise ValueError("FourierControl JSON: m / n_f disagree with coeffs shape")
        return fc


def eval_controls(fc: FourierControl, t: float) -> np.ndarray:
    return fc(t)


def generator_field(fc: FourierControl, H: Sequence[np.ndarray]):
    """``t -> A(t) = sum_k u_k(t) H_k`` as an integrator right-hand side."""
    hs = np.asarray(H, dtype=complex)
    if hs.shape[0] != fc.m:
        raise ValueError(f"{fc.m} controls but {hs.shape[0]} generators")
    flat = hs.reshape(hs.shape[0], -1)
    n = hs.shape[1]

    def A(t, _y=None):
        return (fc(t) @ flat).reshape(n, n)

    return A


# ---------------------------------------------------------------------------
# reference flow

@dataclass
class ReferenceTrajectory(Trajectory):
    """One period of ``X_r^T`` on a uniform grid, plus what produced it."""

    fc: FourierControl | None = None
    H: np.ndarray | None = None
    residual: float = 0.0

    @property
    def period(self) -> float:
        return self.fc.T

    @property
    def h(self) -> float:
        return self.period / (len(self.times) - 1)

    def core(self, t: float) -> np.ndarray:
        """``X_r^T(t mod T)``; grid lookups are exact, others interpolated."""
        T = self.period
        tau = math.fmod(t, T)
        if tau < 0:
            tau += T
        x = tau / self.h
        i = int(round(x))
        if abs(x - i) < 1e-7:
            return self.states[i % (len(self.states) - 1)]
        i = int(math.floor(x))
        return self._hermite(i, x - i)

    def _hermite(self, i: int, s: float) -> np.ndarray:
        # cubic Hermite with exact slopes X' = A X, then back onto U(n)
        h = self.h
        t0 = self.times[i]
        y0, y1 = self.states[i], self.states[i + 1]
        A = generator_field(self.fc, self.H)
        d0 = A(t0) @ y0
        d1 = A(t0 + h) @ y1
        h00 = 2 * s ** 3 - 3 * s ** 2 + 1
        h10 = s ** 3 - 2 * s ** 2 + s
        h01 = -2 * s ** 3 + 3 * s ** 2
        h11 = s ** 3 - s ** 2
        y = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
        return polar_unitary(y)


def integrate_reference(fc: FourierControl, H: Sequence[np.ndarray],
                        cfg: IntegratorConfig | None = None,
                        tau_periodic: float = TAU_PERIODIC) -> ReferenceTrajectory:
    """Integrate ``X_r^T`` over one period and report ``|X_r^T(T) - I|_F``.

    The step is shrunk, if needed, so that an integer number of steps spans
    the period; every step is stored.  A residual above ``tau_periodic`` is
    logged as a warning and kept in ``meta``; it is not fatal here.
    """
    cfg = cfg or IntegratorConfig(step=1e-4)
    hs = np.asarray(H, dtype=complex)
    n = hs.shape[1]
    steps = int(math.ceil(fc.T / cfg.step - 1e-9))
    h = fc.T / steps
    run_cfg = IntegratorConfig(step=h, method=cfg.method, dense_stride=1, check_skew=cfg.check_skew)
    traj = integrate(np.eye(n, dtype=complex), 0.0, fc.T, generator_field(fc, hs), run_cfg, side="left")
    residual = frob(traj.final - np.eye(n))
    meta = {"integrator": run_cfg.to_dict(), "periodicity_residual": residual}
    if residual > tau_periodic:
        meta["warning"] = (f"periodicity residual {residual:.3e} exceeds {tau_periodic:.1e}; "
                           "reduce the integrator step")
        log.warning(meta["warning"])
    return ReferenceTrajectory(times=traj.times, states=traj.states, meta=meta, fc=fc, H=hs, residual=residual)


def sample_reference(traj: ReferenceTrajectory, goal: np.ndarray, t: float) -> np.ndarray:
    """``X_r(t) = X_r^T(t mod T) X_inf``."""
    if traj is None or len(traj) == 0:
        raise ReferenceError("empty reference trajectory")
    goal = check_special_unitary(goal, "goal")
    return traj.core(t) @ goal


@dataclass
class Reference:
    """Reference ``X_r = X_r^T X_inf`` bound to a specific goal."""

    traj: ReferenceTrajectory
    goal: np.ndarray

    def __post_init__(self):
        self.goal = check_special_unitary(self.goal, "goal")

    @property
    def fc(self) -> FourierControl:
        return self.traj.fc

    @property
    def H(self) -> np.ndarray:
        return self.traj.H

    @property
    def n(self) -> int:
        return self.goal.shape[0]

    @property
    def period(self) -> float:
        return self.traj.period

    def __call__(self, t: float) -> np.ndarray:
        return self.traj.core(t) @ self.goal

    def require_periodic(self, gate: float = PLANNER_PERIODIC_GATE) -> None:
        if self.traj.residual > gate:
            raise ReferenceError(
                f"reference periodicity residual {self.traj.residual:.3e} exceeds planner gate {gate:.1e}"
            )


# ---------------------------------------------------------------------------
# truncated Taylor arithmetic

class MatrixTaylor:
    """Matrix-valued polynomial truncated at ``degree`` (coefficients at t=0)."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        self.coeffs = np.asarray(coeffs, dtype=complex)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @classmethod
    def constant(cls, m: np.ndarray, degree: int) -> "MatrixTaylor":
        c = np.zeros((degree + 1,) + m.shape, dtype=complex)
        c[0] = m
        return cls(c)

    def truncate(self, degree: int) -> "MatrixTaylor":
        if degree > self.degree:
            raise ValueError(f"cannot raise degree {self.degree} to {degree}")
        return MatrixTaylor(self.coeffs[: degree + 1])

    def __add__(self, other: "MatrixTaylor") -> "MatrixTaylor":
        d = min(self.degree, other.degree)
        return MatrixTaylor(self.coeffs[: d + 1] + other.coeffs[: d + 1])

    def __neg__(self) -> "MatrixTaylor":
        return MatrixTaylor(-self.coeffs)

    def __sub__(self, other: "MatrixTaylor") -> "MatrixTaylor":
        return self + (-other)

    def __matmul__(self, other: "MatrixTaylor") -> "MatrixTaylor":
        d = min(self.degree, other.degree)
        out = np.zeros((d + 1,) + (self.coeffs.shape[1], other.coeffs.shape[2]), dtype=complex)
        for p in range(d + 1):
            for q in range(p + 1):
                out[p] += self.coeffs[q] @ other.coeffs[p - q]
        return MatrixTaylor(out)

    def derivative(self) -> "MatrixTaylor":
        """Exact derivative; the result is valid to one degree less."""
        if self.degree == 0:
            raise ValueError("degree exhausted: cannot differentiate a degree-0 truncation")
        k = np.arange(1, self.degree + 1).reshape(-1, 1, 1)
        return MatrixTaylor(self.coeffs[1:] * k)

    def at_zero(self) -> np.ndarray:
        return self.coeffs[0]


def control_series(fc: FourierControl, H: Sequence[np.ndarray], degree: int) -> MatrixTaylor:
    hs = np.asarray(H, dtype=complex)
    uc = fc.taylor_at_zero(degree)
    return MatrixTaylor(np.einsum("qk,kij->qij", uc, hs))


def flow_series(A: MatrixTaylor) -> MatrixTaylor:
    """Series of ``X`` with ``X' = A X``, ``X(0) = I``, matched term by term."""
    J = A.degree
    n = A.coeffs.shape[1]
    c = np.zeros((J + 1, n, n), dtype=complex)
    c[0] = np.eye(n)
    for p in range(J):
        acc = np.zeros((n, n), dtype=complex)
        for q in range(p + 1):
            acc += A.coeffs[q] @ c[p - q]
        c[p + 1] = acc / (p + 1)
    return MatrixTaylor(c)


def taylor_B_at_zero(fc: FourierControl, H: Sequence[np.ndarray], J_max: int) -> list[list[np.ndarray]]:
    """``B[j][k] = B^j_k(0)`` for ``0 <= j <= J_max``.

    ``B^0_k = H_k X_r^T`` and ``B^{j+1}_k = -A B^j_k + d/dt B^j_k`` are run in
    truncated Taylor arithmetic: every derivative costs one degree, so the
    series start at degree ``J_max`` and ``B^j`` is carried at ``J_max - j``.
    """
    if J_max < 0:
        raise ValueError("J_max must be >= 0")
    hs = np.asarray(H, dtype=complex)
    A = control_series(fc, hs, J_max)
    X = flow_series(A)
    table: list[list[np.ndarray]] = []
    current = [MatrixTaylor.constant(h, J_max) @ X for h in hs]
    for j in range(J_max + 1):
        if any(b.degree != J_max - j for b in current):
            raise AssertionError("internal error: Taylor degree bookkeeping violated")
        row = []
        for k, b in enumerate(current):
            b0 = b.at_zero()
            scale = max(1.0, frob(b0))
            if frob(b0 + b0.conj().T) > 1e-12 * scale or abs(np.trace(b0)) > 1e-12 * scale:
                raise MembershipError(f"B^{j}_{k + 1}(0) left su(n)")
            row.append(b0)
        table.append(row)
        if j < J_max:
            current = [(-(A @ b)).truncate(J_max - j - 1) + b.derivative() for b in current]
    return table


@dataclass
class RegularityReport:
    J_max: int
    rank: int
    required: int
    singular_values: list[float]
    is_regular: bool
    lie_closure_dim: int
    tol: float = RANK_TOL
    note: str = ""
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "J_max": self.J_max,
            "rank": self.rank,
            "required": self.required,
            "is_regular": self.is_regular,
            "lie_closure_dim": self.lie_closure_dim,
            "tol": self.tol,
            "singular_values": self.singular_values,
            "note": self.note,
            **self.meta,
        }


def default_J_max(n: int) -> int:
    return 6 if n == 4 else min(n * n, 2 * (n * n - 1))


def regularity_check(fc: FourierControl, H: Sequence[np.ndarray], J_max: int | None = None,
                     tol: float = RANK_TOL) -> RegularityReport:
    hs = np.asarray(H, dtype=complex)
    n = hs.shape[1]
    if J_max is None:
        J_max = default_J_max(n)
    table = taylor_B_at_zero(fc, hs, J_max)
    flat = [b for row in table for b in row]
    s = singular_values(flat)
    rank = int(np.sum(s > tol * s[0])) if s.size else 0
    required = n * n - 1
    regular = rank == required
    note = "" if regular else (
        f"rank {rank} < {required} with derivatives up to order {J_max}: inconclusive, "
        "higher orders may still complete the span")
    return RegularityReport(
        J_max=J_max, rank=rank, required=required, singular_values=[float(v) for v in s],
        is_regular=regular, lie_closure_dim=lie_closure_dim(list(hs), n, tol), tol=tol, note=note,
        meta={"fourier": fc.to_json()},
    )
