"""Command-line front end.

Exit codes: 0 success, 1 domain failure (gate or precondition), 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .config import SEED_ENV, ConfigError, RunConfig, goal_file, preset
from .integrator import IntegratorConfig, fmt
from .lyapunov import TrackingError, TrackingRun, simulate_tracking
from .planner import PlanningError, compute_G, plan
from .reference import (
    FourierControl,
    ReferenceError,
    integrate_reference,
    regularity_check,
    taylor_B_at_zero,
)
from .spin_model import AXES, compare_rwa, interaction_C, interaction_C_closed_form, recombine_controls_complex
from .su_core import MembershipError, fidelity_V
from .svgplot import Series, figure, panel

log = logging.getLogger("su_steer")

DOMAIN_ERRORS = (PlanningError, TrackingError, ReferenceError, MembershipError, ConfigError, ValueError)


class DomainFailure(Exception):
    pass


# ---------------------------------------------------------------------------
# file helpers

def atomic_write(path, write) -> None:
    """Call ``write(tmp_path)`` then rename onto ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    umask = os.umask(0)
    os.umask(umask)
    try:
        os.chmod(tmp, 0o666 & ~umask)
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_text(path, text: str) -> None:
    def w(tmp):
        with open(tmp, "w") as fh:
            fh.write(text)
    atomic_write(path, w)


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# config assembly

def load_config(args) -> RunConfig:
    if getattr(args, "config", None):
        cfg = RunConfig.load(args.config)
    else:
        cfg = preset(getattr(args, "preset", None) or "cnot")
    goal = getattr(args, "goal", None)
    if goal:
        p = Path(goal)
        if p.suffix == ".json" and p.exists():
            obj = goal_file(p)
            cfg.goal = obj.get("goal", obj) if isinstance(obj, dict) and "re" not in obj else obj
        elif p.suffix == ".json" and p.stem in ("cnot", "identity", "minus_identity"):
            cfg.goal = p.stem
        else:
            cfg.goal = goal
    for name in ("horizon", "err_target", "step", "dense_stride", "states_stride", "J_max"):
        val = getattr(args, name, None)
        if val is not None:
            setattr(cfg, name, val)
    cfg.validate()
    return cfg


def build_fourier_args(args, cfg: RunConfig) -> None:
    if getattr(args, "zero_fourier", False):
        cfg.fourier = {"source": "zero", "n_f": 1}
    elif getattr(args, "random", False):
        cfg.fourier = {"source": "random", "a": args.a, "n_f": args.n_f, "seed": args.seed}


# ---------------------------------------------------------------------------
# subcommands

def cmd_compute_delta(args) -> int:
    crit = compute_G(args.n)
    d = crit.to_json()
    print(json.dumps({"values": d["values"], "delta": d["delta"]}))
    return 0


def cmd_check_regularity(args) -> int:
    cfg = load_config(args)
    build_fourier_args(args, cfg)
    H = cfg.build_generators()
    fc = cfg.build_fourier(len(H))
    rep = regularity_check(fc, H, cfg.J_max, cfg.rank_tol)
    out = rep.to_json()
    if cfg.fourier.get("source") == "random":
        out["seed"] = fc.seed
    if not args.skip_periodicity:
        ref = integrate_reference(fc, H, cfg.reference_integrator())
        out["periodicity_residual"] = ref.residual
    print(dumps(out), end="")
    return 0 if rep.is_regular else 1


def _prepare(cfg: RunConfig):
    H = cfg.build_generators()
    fc = cfg.build_fourier(len(H))
    gains = cfg.build_gains(len(H))
    goal = cfg.build_goal()
    ref = integrate_reference(fc, H, cfg.reference_integrator())
    rep = regularity_check(fc, H, cfg.J_max, cfg.rank_tol)
    btable = taylor_B_at_zero(fc, H, rep.J_max) if cfg.e_residual else None
    return H, fc, gains, goal, ref, rep, btable


def run_diagnostics(run: TrackingRun) -> dict:
    seg_err = []
    for s in np.unique(run.segment):
        e = run.err[run.segment == s]
        if len(e) > 1:
            seg_err.append(float(np.max(e[1:] - e[:-1])))
    d = {
        "samples": int(len(run.times)),
        "t_end": float(run.times[-1]),
        "err_initial": float(run.err[0]),
        "err_final": float(run.err[-1]),
        "V_Z_final": float(run.V_Z[-1]),
        "max_err_increase": max(seg_err) if seg_err else 0.0,
        "identity_defect": run.identity_defect(),
        "V_W_drop": run.monotonicity_violation(),
    }
    if run.e_residual is not None:
        d["e_residual_initial"] = float(run.e_residual[0])
        d["e_residual_final"] = float(run.e_residual[-1])
    return d


def _write_outputs(out: Path, cfg: RunConfig, run: TrackingRun, meta: dict, plan_json: dict | None,
                   plots: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "run.csv", run.write_run_csv)
    atomic_write(out / "states.csv", lambda p: run.write_states_csv(p, cfg.states_stride))
    atomic_write(out / "diagnostics.csv", run.write_diagnostics_csv)
    if plan_json is not None:
        atomic_text(out / "plan.json", dumps(plan_json))
    atomic_text(out / "meta.json", dumps(meta))
    if plots:
        write_plots(out)


def _base_meta(cfg: RunConfig, fc: FourierControl, ref, rep) -> dict:
    return {
        "code_version": __version__,
        "config": cfg.to_dict(),
        "seed": fc.seed,
        "seed_env": os.environ.get(SEED_ENV),
        "periodicity_residual": ref.residual,
        "regularity": {"rank": rep.rank, "required": rep.required, "J_max": rep.J_max,
                       "is_regular": rep.is_regular},
    }


def cmd_plan(args) -> int:
    cfg = load_config(args)
    H, fc, gains, goal, ref, rep, btable = _prepare(cfg)
    if not rep.is_regular:
        raise DomainFailure(f"reference is not regular (rank {rep.rank} < {rep.required}); {rep.note}")
    glued = plan(goal, ref, gains, cfg.plan_config(), btable, rep.is_regular)
    run = glued.run
    meta = _base_meta(cfg, fc, ref, rep)
    meta.update({
        "branch": glued.branch,
        "horizon": float(run.times[-1]) if cfg.horizon is None else cfg.horizon,
        "converged": glued.converged,
        "switch_times": glued.switch_times,
        "z_jumps": glued.z_jumps(),
        "delta": glued.meta["delta"],
        "V_goal": glued.meta["V_goal"],
        "residuals": run_diagnostics(run),
    })
    _write_outputs(Path(args.out), cfg, run, meta, glued.to_json(), not args.no_plots)
    print(dumps({"out": str(args.out), "branch": glued.branch, "converged": glued.converged,
                 "err_final": float(run.err[-1])}), end="")
    return 0 if glued.converged else 1


def cmd_simulate(args) -> int:
    cfg = load_config(args)
    H, fc, gains, goal, ref, rep, btable = _prepare(cfg)
    horizon = cfg.horizon if cfg.horizon is not None else 200.0 * cfg.T
    run = simulate_tracking(goal, ref, gains, horizon, cfg.integrator(), err_target=cfg.err_target, btable=btable)
    meta = _base_meta(cfg, fc, ref, rep)
    meta.update({"branch": "direct", "horizon": horizon, "residuals": run_diagnostics(run),
                 "stop_reason": run.meta["stop_reason"], "delta": run.meta["delta"], "V_goal": run.meta["V_goal"]})
    _write_outputs(Path(args.out), cfg, run, meta, None, not args.no_plots)
    print(dumps({"out": str(args.out), "err_final": float(run.err[-1])}), end="")
    return 0


def read_run_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise DomainFailure(f"{path} has no samples")
    head, body = rows[0], np.array(rows[1:], dtype=float)
    return {name: body[:, i] for i, name in enumerate(head)}


def write_plots(run_dir: Path, window: float = 10.0) -> list[Path]:
    data = read_run_csv(run_dir / "run.csv")
    t = data["t"]
    err = data["err"]
    pos = err > 0
    panels = [panel([Series(t, err, "err")], 70, 40, 620, 240, "Tracking error", "t", "|X - X_r|_F")]
    if np.any(pos):
        panels.append(panel([Series(t[pos], np.log10(err[pos]), "log10 err")], 70, 340, 620, 240,
                            "Tracking error (log scale)", "t", "log10 |X - X_r|_F"))
    err_svg = figure(panels, 740, 630 if len(panels) == 2 else 330)
    sel = t <= window + 1e-12
    uv = []
    for kind in ("u", "v"):
        series = [Series(t[sel], data[f"{kind}_{k}"][sel], f"{kind}_{k}") for k in (1, 2) if f"{kind}_{k}" in data]
        if not series:
            raise DomainFailure(f"run.csv has no {kind}_1 column")
        uv.append(series)
    ctl_svg = figure([
        panel(uv[0], 70, 40, 620, 240, f"Controls on [0, {window:g}]", "t", "u_k"),
        panel(uv[1], 70, 340, 620, 240, f"Feedbacks on [0, {window:g}]", "t", "v_k"),
    ], 740, 630)
    paths = [run_dir / "error.svg", run_dir / "controls.svg"]
    atomic_text(paths[0], err_svg)
    atomic_text(paths[1], ctl_svg)
    return paths


def cmd_plot(args) -> int:
    run_dir = Path(args.run_dir)
    if not (run_dir / "run.csv").is_file():
        raise DomainFailure(f"no run.csv in {run_dir}")
    for p in write_plots(run_dir, args.window):
        print(p)
    return 0


def cmd_verify_conjugation(args) -> int:
    grid = np.linspace(0.0, args.t_max, args.points)
    worst = max(float(np.max(np.abs(interaction_C(a, t) - interaction_C_closed_form(a, t))))
                for a in AXES for t in grid)
    rng = np.random.default_rng(args.seed)
    imag = max(float(np.max(np.abs(recombine_controls_complex(rng.uniform(-5, 5, 6), t).imag))) for t in grid)
    ok = worst <= args.tol and imag <= 1e-14
    print(dumps({"points": args.points, "max_deviation": worst, "max_imag_recombined": imag, "ok": ok}), end="")
    return 0 if ok else 1


def cmd_compare_rwa(args) -> int:
    if args.run_dir:
        # planned controls from a previous run, interpolated between samples
        from scipy.interpolate import CubicSpline

        data = read_run_csv(Path(args.run_dir) / "run.csv")
        us = np.column_stack([data[f"u_{k}"] for k in range(1, 7)])
        if args.horizon > data["t"][-1]:
            raise DomainFailure(f"horizon {args.horizon:g} exceeds the run length {data['t'][-1]:g}")
        controls = CubicSpline(data["t"], us)
    else:
        cfg = preset("cnot")
        controls = cfg.build_fourier(6)
    times, err = compare_rwa(controls, args.horizon, args.amplitude_scale, IntegratorConfig(step=args.step))

    def w(tmp):
        with open(tmp, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "err"])
            for t, e in zip(times, err):
                wr.writerow([fmt(t), fmt(e)])

    if args.out:
        atomic_write(args.out, w)
    else:
        w("/dev/stdout")
    return 0


# ---------------------------------------------------------------------------
# parser

def _add_run_args(p: argparse.ArgumentParser, out: bool = True) -> None:
    p.add_argument("--preset", choices=["cnot", "spin4", "minus_identity"], help="built-in run configuration")
    p.add_argument("--config", help="RunConfig JSON file (overrides --preset)")
    p.add_argument("--goal", help="goal preset name or JSON file ({n, re, im} or {\"goal\": name})")
    p.add_argument("--horizon", type=float)
    p.add_argument("--err-target", dest="err_target", type=float)
    p.add_argument("--step", type=float, help="controller step")
    p.add_argument("--dense-stride", dest="dense_stride", type=int)
    p.add_argument("--states-stride", dest="states_stride", type=int)
    if out:
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--no-plots", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="su-steer", description="Periodic-reference tracking on SU(n).")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute-delta", help="critical set and level for SU(n)")
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(func=cmd_compute_delta)

    p = sub.add_parser("check-regularity", help="rank of the reference derivatives at t = 0")
    _add_run_args(p, out=False)
    p.add_argument("--J-max", dest="J_max", type=int)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--zero-fourier", action="store_true", help="all Fourier coefficients zero")
    g.add_argument("--random", action="store_true", help="seeded random Fourier table")
    p.add_argument("--a", type=float, default=5.0)
    p.add_argument("--n-f", dest="n_f", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skip-periodicity", action="store_true")
    p.set_defaults(func=cmd_check_regularity)

    p = sub.add_parser("plan", help="plan and simulate, choosing the direct or segmented branch")
    _add_run_args(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="direct-branch tracking run")
    _add_run_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plot", help="SVG plots from a run directory")
    p.add_argument("run_dir")
    p.add_argument("--window", type=float, default=10.0)
    p.set_defaults(func=cmd_plot)

    sp = sub.add_parser("spin-model", help="two-spin model checks")
    ssub = sp.add_subparsers(dest="spin_command", required=True)
    p = ssub.add_parser("verify-conjugation")
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--t-max", dest="t_max", type=float, default=2 * np.pi)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify_conjugation)
    p = ssub.add_parser("compare-rwa")
    p.add_argument("--amplitude-scale", dest="amplitude_scale", type=float, default=1.0)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--run-dir", dest="run_dir", help="use the planned u_1..u_6 from this run (default: reference)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare_rwa)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DomainFailure, *DOMAIN_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
