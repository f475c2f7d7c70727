"""Fixed-step integrators for ``Y' = F(t, Y) Y`` and ``W' = W F(t, W)`` on SU(n).

``lie_rk4`` is the classical fourth-order Runge-Kutta-Munthe-Kaas scheme:
the stages live in su(n) and each step applies one exponential, so the
state never leaves the group.  ``rk4_project`` runs ordinary RK4 on the
matrix entries and pulls the result back with a polar decomposition; it is
kept as an independent cross-check.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Literal

import numpy as np

from .su_core import TAU_SKEW, MembershipError, dag, expm_skew, project_su

Generator = Callable[[float, np.ndarray], np.ndarray]
Side = Literal["left", "right"]


@dataclass(frozen=True)
class IntegratorConfig:
    step: float = 1e-3
    method: Literal["lie_rk4", "rk4_project"] = "lie_rk4"
    dense_stride: int = 1
    check_skew: bool = True

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if self.dense_stride < 1:
            raise ValueError(f"dense_stride must be >= 1, got {self.dense_stride}")
        if self.method not in ("lie_rk4", "rk4_project"):
            raise ValueError(f"unknown method {self.method!r}")

    def to_dict(self) -> dict:
        return {"step": self.step, "method": self.method, "dense_stride": self.dense_stride}


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (len(times), n, n)
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self, path, prefix: str = "x") -> None:
        write_states_csv(path, self.times, self.states, prefix)


def _checked(a: np.ndarray, tol: float) -> np.ndarray:
    defect = np.abs(a + a.conj().T).max()
    if defect > tol * max(1.0, np.abs(a).max()):
        raise MembershipError(f"generator is not skew-Hermitian (defect {defect:.3e})")
    return a


def _dexpinv(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    # inverse dexp truncated after the second commutator; enough for order 4
    c = u @ v - v @ u
    return v - 0.5 * c + (u @ c - c @ u) / 12.0


def step_left(y: np.ndarray, t: float, h: float, F: Generator,
              method: str = "lie_rk4", check_skew: bool = True) -> np.ndarray:
    """One step of ``Y' = F(t, Y) Y``.

    With ``check_skew`` the first stage value is verified to lie in u(n).
    """
    k1 = F(t, y)
    if check_skew:
        _checked(k1, TAU_SKEW)
    if method == "lie_rk4":
        u = 0.5 * h * k1
        k2 = _dexpinv(u, F(t + 0.5 * h, expm_skew(u) @ y))
        u = 0.5 * h * k2
        k3 = _dexpinv(u, F(t + 0.5 * h, expm_skew(u) @ y))
        u = h * k3
        k4 = _dexpinv(u, F(t + h, expm_skew(u) @ y))
        omega = (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return expm_skew(omega) @ y
    if method == "rk4_project":
        k1 = k1 @ y
        y2 = y + 0.5 * h * k1
        k2 = F(t + 0.5 * h, y2) @ y2
        y3 = y + 0.5 * h * k2
        k3 = F(t + 0.5 * h, y3) @ y3
        y4 = y + h * k3
        k4 = F(t + h, y4) @ y4
        return project_su(y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
    raise ValueError(f"unknown method {method!r}")


def step_right(w: np.ndarray, t: float, h: float, F: Generator,
               method: str = "lie_rk4", check_skew: bool = True) -> np.ndarray:
    """One step of ``W' = W F(t, W)``, via the adjoint ``Y = W^H``."""
    left = lambda s, y: -F(s, dag(y))
    return dag(step_left(dag(w), t, h, left, method, check_skew))


def step_grid(t0: float, t1: float, h: float) -> np.ndarray:
    """Grid ``t0, t0+h, ...`` closed by ``t1`` (last step may be partial)."""
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    n_full = int(math.floor((t1 - t0) / h + 1e-9))
    grid = t0 + h * np.arange(n_full + 1)
    if t1 - grid[-1] > 1e-9 * h:
        grid = np.append(grid, t1)
    else:
        grid[-1] = t1 if n_full > 0 else t0
    return grid


def march(y0: np.ndarray, t0: float, t1: float, F: Generator, cfg: IntegratorConfig,
          side: Side = "left") -> Iterator[tuple[int, float, np.ndarray]]:
    """Yield ``(i, t_i, Y_i)`` for every grid point, starting with the initial state."""
    stepper = step_left if side == "left" else step_right
    grid = step_grid(t0, t1, cfg.step)
    y = np.asarray(y0, dtype=complex)
    yield 0, float(grid[0]), y
    for i in range(1, len(grid)):
        y = stepper(y, float(grid[i - 1]), float(grid[i] - grid[i - 1]), F, cfg.method, cfg.check_skew)
        yield i, float(grid[i]), y


def integrate(y0: np.ndarray, t0: float, t1: float, F: Generator, cfg: IntegratorConfig | None = None,
              side: Side = "left") -> Trajectory:
    """Fixed-step march from ``t0`` to ``t1`` sampled every ``dense_stride`` steps.

    The endpoint is always recorded, so ``t1`` is the last sample time.
    """
    cfg = cfg or IntegratorConfig()
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    times, states = [], []
    last = len(step_grid(t0, t1, cfg.step)) - 1
    for i, t, y in march(y0, t0, t1, F, cfg, side):
        if i % cfg.dense_stride == 0 or i == last:
            times.append(t)
            states.append(y)
    return Trajectory(np.array(times), np.array(states), {"integrator": cfg.to_dict()})


def state_columns(n: int, prefix: str = "x") -> list[str]:
    cols = []
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            cols += [f"{prefix}_re_{i}{j}", f"{prefix}_im_{i}{j}"]
    return cols


def fmt(x: float) -> str:
    return repr(float(x))


def write_states_csv(path, times, states, prefix: str = "x") -> None:
    states = np.asarray(states)
    n = states.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + state_columns(n, prefix))
        for t, s in zip(times, states):
            flat = np.empty(2 * n * n)
            flat[0::2] = s.real.ravel()
            flat[1::2] = s.imag.ravel()
            w.writerow([fmt(t)] + [fmt(v) for v in flat])


def read_states_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    times = data[:, 0]
    flat = data[:, 1:]
    n = int(round(math.sqrt(flat.shape[1] / 2)))
    states = (flat[:, 0::2] + 1j * flat[:, 1::2]).reshape(-1, n, n)
    return times, states
