"""Two coupled spin-1/2 particles driven by a field, in SU(4).

Lab frame: ``Y' = (D + D_x u_x + D_y u_y + D_z u_z) Y``.  Removing the drift
with ``X = exp(-D t) Y`` gives the interaction picture ``X' = sum_a C_a(t) u_a X``
with ``C_a(t) = exp(-D t) D_a exp(D t)``.  Modulating each field component
on the carrier, ``u_x = 2 u_1 cos(w t) - 2 u_2 sin(w t)`` (and likewise for
y, z), and keeping only the non-oscillating terms leaves the driftless
six-generator system used for gate synthesis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .integrator import IntegratorConfig, Trajectory, integrate
from .su_core import generator_HI, generator_HR, lie_closure_dim

AXES = ("x", "y", "z")


def _hr(i, j):
    return generator_HR(i, j, 4)


def _hi(i, j):
    return generator_HI(i, j, 4)


@dataclass(frozen=True)
class SpinModel:
    D: np.ndarray = field(default_factory=lambda: np.diag([3j, -1j, -1j, -1j]))
    omega: float = 4.0

    @property
    def Dx(self) -> np.ndarray:
        return _hr(1, 4) - 3 * _hr(2, 3)

    @property
    def Dy(self) -> np.ndarray:
        return _hr(1, 3) + 3 * _hr(2, 4)

    @property
    def Dz(self) -> np.ndarray:
        return _hr(1, 2) - 3 * _hr(3, 4)

    def drive(self, axis: str) -> np.ndarray:
        return {"x": self.Dx, "y": self.Dy, "z": self.Dz}[axis]

    @property
    def H(self) -> list[np.ndarray]:
        """RWA generators in control order u_1..u_6."""
        return [_hr(1, 4), _hi(1, 4), _hr(1, 3), _hi(1, 3), _hr(1, 2), _hi(1, 2)]


SPIN4 = SpinModel()


def spin4_generators() -> list[np.ndarray]:
    return SPIN4.H


def interaction_C(axis: str, t: float, model: SpinModel = SPIN4) -> np.ndarray:
    """``exp(-D t) D_axis exp(D t)``, by direct conjugation with the diagonal drift."""
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    d = np.diag(model.D)
    left = np.exp(-d * t)
    right = np.exp(d * t)
    return left[:, None] * model.drive(axis) * right[None, :]


def interaction_C_closed_form(axis: str, t: float) -> np.ndarray:
    """The displayed closed-form matrices, written out entry by entry."""
    em = np.exp(-4j * t)
    ep = np.exp(4j * t)
    c = np.zeros((4, 4), dtype=complex)
    if axis == "x":
        c[0, 3], c[3, 0] = em, -ep
        c[1, 2], c[2, 1] = -3, 3
    elif axis == "y":
        c[0, 2], c[2, 0] = em, -ep
        c[1, 3], c[3, 1] = 3, -3
    elif axis == "z":
        c[0, 1], c[1, 0] = em, -ep
        c[2, 3], c[3, 2] = -3, 3
    else:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    return c


def recombine_controls(u6, t: float, omega: float = SPIN4.omega) -> np.ndarray:
    """Real field components ``(u_x, u_y, u_z)`` from the six RWA controls.

    ``(u1 + i u2) e^{i w t} + (u1 - i u2) e^{-i w t} = 2 u1 cos(w t) - 2 u2 sin(w t)``.
    """
    u = np.asarray(u6, dtype=float)
    if u.shape != (6,):
        raise ValueError("expected six controls")
    c, s = np.cos(omega * t), np.sin(omega * t)
    return np.array([2 * u[0] * c - 2 * u[1] * s, 2 * u[2] * c - 2 * u[3] * s, 2 * u[4] * c - 2 * u[5] * s])


def recombine_controls_complex(u6, t: float, omega: float = SPIN4.omega) -> np.ndarray:
    """Same as :func:`recombine_controls` but literally in exponential form (complex dtype)."""
    u = np.asarray(u6, dtype=float)
    ep, em = np.exp(1j * omega * t), np.exp(-1j * omega * t)
    return np.array([(u[2 * a] + 1j * u[2 * a + 1]) * ep + (u[2 * a] - 1j * u[2 * a + 1]) * em for a in range(3)])


def rwa_system(u6, model: SpinModel = SPIN4) -> np.ndarray:
    u = np.asarray(u6, dtype=float)
    return np.tensordot(u, np.array(model.H), axes=1)


def rwa_lie_dim(model: SpinModel = SPIN4) -> int:
    return lie_closure_dim(model.H, 4)


@dataclass
class FullModelRun:
    Y: Trajectory
    X: Trajectory


def simulate_full_model(u6_of_t: Callable[[float], np.ndarray], horizon: float,
                        cfg: IntegratorConfig | None = None, model: SpinModel = SPIN4) -> FullModelRun:
    """Integrate the lab-frame system and map it to the interaction picture."""
    cfg = cfg or IntegratorConfig()
    if abs(np.trace(model.D)) > 1e-14:
        raise ValueError("drift must be traceless to stay in SU(4)")
    drives = np.array([model.Dx, model.Dy, model.Dz])
    D = model.D

    def F(t, _y):
        return D + np.tensordot(recombine_controls(u6_of_t(t), t, model.omega), drives, axes=1)

    Y = integrate(np.eye(4, dtype=complex), 0.0, horizon, F, cfg, side="left")
    d = np.diag(D)
    xs = np.array([np.exp(-d * t)[:, None] * y for t, y in zip(Y.times, Y.states)])
    return FullModelRun(Y=Y, X=Trajectory(Y.times, xs, dict(Y.meta)))


def simulate_rwa(u6_of_t: Callable[[float], np.ndarray], horizon: float,
                 cfg: IntegratorConfig | None = None, model: SpinModel = SPIN4) -> Trajectory:
    cfg = cfg or IntegratorConfig()
    return integrate(np.eye(4, dtype=complex), 0.0, horizon, lambda t, _y: rwa_system(u6_of_t(t), model),
                     cfg, side="left")


def compare_rwa(u6_of_t: Callable[[float], np.ndarray], horizon: float, amplitude_scale: float = 1.0,
                cfg: IntegratorConfig | None = None, model: SpinModel = SPIN4) -> tuple[np.ndarray, np.ndarray]:
    """Sample times and ``|X_full(t) - X_rwa(t)|_F`` for controls scaled by ``amplitude_scale``."""
    scaled = lambda t: amplitude_scale * np.asarray(u6_of_t(t), dtype=float)
    full = simulate_full_model(scaled, horizon, cfg, model)
    rwa = simulate_rwa(scaled, horizon, cfg, model)
    err = np.linalg.norm(full.X.states - rwa.states, axis=(1, 2))
    return full.X.times, err
