"""Run configuration and the built-in presets."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .integrator import IntegratorConfig
from .lyapunov import FeedbackGains
from .planner import PlanConfig
from .reference import FourierControl
from .spin_model import spin4_generators
from .su_core import check_su_element, matrix_from_json, matrix_to_json

SEED_ENV = "SU_STEER_SEED"

# Fourier coefficients of the six reference controls for the two-spin C-NOT run
ABAR = np.array([
    [-2.00, -1.39, 4.66, 4.31, 1.80],
    [-0.31, -1.54, 0.92, -3.20, -2.18],
    [-4.69, -0.31, 1.75, 3.94, -1.11],
    [-2.79, 0.77, 4.09, 2.34, 3.46],
    [2.19, 0.60, -0.27, 0.43, -3.75],
    [-0.18, -4.44, -1.38, -4.58, 2.59],
])

CNOT = np.array([
    [1, 0, 0, 0],
    [0, 1, 0, 0],
    [0, 0, 0, -1],
    [0, 0, 1, 0],
], dtype=complex)

NAMED_GOALS = {
    "cnot": lambda n: CNOT,
    "identity": lambda n: np.eye(n, dtype=complex),
    "minus_identity": lambda n: -np.eye(n, dtype=complex),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    n: int = 4
    T: float = 1.0
    generators: Any = "spin4"
    fourier: dict = field(default_factory=lambda: {"source": "explicit", "coeffs": ABAR.tolist()})
    gains: Any = 1.0
    goal: Any = "cnot"
    reference_step: float = 1e-4
    step: float = 1e-3
    method: str = "lie_rk4"
    dense_stride: int = 10
    states_stride: int = 100
    horizon: float | None = 200.0
    err_target: float | None = None
    margin: float = 0.1
    eps_seg: float | None = None
    segment_cap: float | None = None
    N: int | None = None
    J_max: int | None = None
    rank_tol: float = 1e-8
    e_residual: bool = True

    # ------------------------------------------------------------------
    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def validate(self) -> None:
        if self.n < 2:
            raise ConfigError("n >= 2 required")
        if not self.T > 0:
            raise ConfigError("T must be positive")
        if self.dense_stride < 1 or self.states_stride < 1:
            raise ConfigError("strides must be >= 1")
        if self.horizon is None and self.err_target is None:
            raise ConfigError("set a horizon, an err_target, or both")

    # ------------------------------------------------------------------
    def build_generators(self) -> np.ndarray:
        if self.generators == "spin4":
            if self.n != 4:
                raise ConfigError("the spin4 generator preset needs n = 4")
            hs = spin4_generators()
        elif isinstance(self.generators, list):
            hs = [matrix_from_json(g) for g in self.generators]
        else:
            raise ConfigError(f"unknown generator spec {self.generators!r}")
        hs = [check_su_element(h, f"H_{k + 1}") for k, h in enumerate(hs)]
        if any(h.shape != (self.n, self.n) for h in hs):
            raise ConfigError(f"generators must be {self.n}x{self.n}")
        return np.array(hs)

    def seed(self) -> int | None:
        env = os.environ.get(SEED_ENV)
        if env is not None:
            return int(env)
        return self.fourier.get("seed")

    def build_fourier(self, m: int) -> FourierControl:
        src = self.fourier.get("source", "explicit")
        if src == "explicit":
            fc = FourierControl(T=self.T, coeffs=np.asarray(self.fourier["coeffs"], dtype=float))
        elif src == "random":
            seed = self.seed()
            if seed is None:
                raise ConfigError("random Fourier table needs a seed (config or $SU_STEER_SEED)")
            fc = FourierControl.random(m, n_f=int(self.fourier.get("n_f", 5)), a=float(self.fourier.get("a", 5.0)),
                                       T=self.T, seed=seed)
        elif src == "zero":
            fc = FourierControl.zeros(m, n_f=int(self.fourier.get("n_f", 1)), T=self.T)
        else:
            raise ConfigError(f"unknown Fourier source {src!r}")
        if fc.m != m:
            raise ConfigError(f"Fourier table has {fc.m} rows for {m} generators")
        return fc

    def build_gains(self, m: int) -> FeedbackGains:
        if isinstance(self.gains, (int, float)):
            return FeedbackGains.uniform(m, float(self.gains))
        return FeedbackGains(tuple(self.gains))

    def build_goal(self) -> np.ndarray:
        if isinstance(self.goal, str):
            if self.goal not in NAMED_GOALS:
                raise ConfigError(f"unknown goal preset {self.goal!r}")
            g = NAMED_GOALS[self.goal](self.n)
        else:
            g = matrix_from_json(self.goal)
        if g.shape != (self.n, self.n):
            raise ConfigError(f"goal must be {self.n}x{self.n}")
        return g

    def reference_integrator(self) -> IntegratorConfig:
        return IntegratorConfig(step=self.reference_step, method=self.method)

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(step=self.step, method=self.method, dense_stride=self.dense_stride)

    def plan_config(self) -> PlanConfig:
        return PlanConfig(integrator=self.integrator(), margin=self.margin, eps_seg=self.eps_seg,
                          segment_cap=self.segment_cap, err_target=self.err_target, horizon=self.horizon,
                          N=self.N)


def preset(name: str) -> RunConfig:
    if name == "cnot":
        return RunConfig()
    if name == "spin4":
        return RunConfig(goal="identity")
    if name == "minus_identity":
        return RunConfig(goal="minus_identity", horizon=None, err_target=0.05)
    raise ConfigError(f"unknown preset {name!r}")


def goal_file(path) -> Any:
    with open(path) as fh:
        return json.load(fh)


def goal_json(m: np.ndarray) -> dict:
    return matrix_to_json(m)
