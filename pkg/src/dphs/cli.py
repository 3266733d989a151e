"""``dphs-bench``: run the bundled experiments and compare integrators.

Examples
--------
::

    dphs-bench pendulum --method avfphs --h 0.5 --steps 200
    dphs-bench rigid-body --method disgrad-secant --steps 120 --out results/
    dphs-bench pendulum --compare avfphs,plain-avf,implicit-midpoint,improved-euler

Exit status is 0 on success, 1 for configuration errors and 2 when a step
(or the reference solve) fails.  Diagnostics go to standard error, the
run summary to standard output.
"""

import argparse
import importlib
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import experiments as ex
from .audit import build_ledger, lyapunov_decrease, reference_solution
from .exceptions import ConfigurationError, ContractViolation, StepFailure
from .integrators import METHODS, integrate, integrate_splitting, make_stepper
from .io import trajectory_columns, write_ledger, write_table, write_trajectory
from .solver import StepperConfig
from .system import StepRecord, Trajectory

__all__ = [
    "ExperimentConfig",
    "RunResult",
    "build_experiment",
    "run_experiment",
    "compare_methods",
    "load_config_file",
    "main",
]

EXPERIMENT_NAMES = ("rigid-body", "pendulum", "microphone", "custom")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one CLI run.

    ``h`` and ``steps`` default to the experiment's own values when ``None``.
    ``overrides`` maps parameter names (``x0``, ``gain``, ``R``, ``c``, ``m``,
    ``q_bar``, ``inertia``, ``factory``) to values.
    """

    experiment: str
    method: str = "avfphs"
    h: Optional[float] = None
    steps: Optional[int] = None
    stages: int = 2
    tol: float = 1e-12
    max_iter: int = 100
    solver: str = "fixed-point"
    out: Optional[str] = "."
    compare: tuple = ()
    oracle_h: Optional[float] = None
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENT_NAMES:
            raise ConfigurationError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENT_NAMES}")
        for m in (self.method,) + tuple(self.compare):
            if _canonical_method(m) not in METHODS:
                raise ConfigurationError(f"unknown method {m!r}; choose from {METHODS}")
        if self.stages < 1:
            raise ConfigurationError("stages must be at least 1")

    def stepper_config(self, h):
        return StepperConfig(h, self.tol, self.max_iter, self.solver)


@dataclass
class RunResult:
    trajectory: Trajectory
    ledger: object
    summary: dict
    files: list
    failure: Optional[StepFailure] = None


def _canonical_method(name):
    return "collocation" if name == "collocation-s" else name


def _vector(v):
    if isinstance(v, str):
        return np.array([float(s) for s in v.replace(",", " ").split()])
    return np.atleast_1d(np.asarray(v, dtype=float))


def build_experiment(name, overrides=None):
    """Bundled experiment ``name`` with parameter ``overrides`` applied."""
    o = dict(overrides or {})
    x0 = _vector(o.pop("x0")) if "x0" in o else None
    if name == "pendulum":
        gain = float(o.pop("gain", 0.01))
        e = replace(ex.get_experiment("pendulum"), law=ex.pendulum_law(gain))
        e = replace(e, parameters={**e.parameters, "gain": gain})
    elif name == "microphone":
        keys = {"R": "resistance", "c": "damping", "m": "mass", "q_bar": "q_bar"}
        kw = {keys[k]: float(o.pop(k)) for k in list(o) if k in keys}
        gain = float(o.pop("gain", 0.5))
        e = ex.get_experiment("microphone")
        params = {**e.parameters, **{k: v for k, v in zip(
            ("R", "c", "m", "q_bar"), (kw.get(keys[k], e.parameters[k]) for k in ("R", "c", "m", "q_bar")))}}
        e = replace(e, system=ex.microphone(**kw), law=ex.microphone_law(gain), parameters={**params, "gain": gain})
    elif name == "rigid-body":
        e = ex.get_experiment("rigid-body")
        if "inertia" in o:
            inertia = _vector(o.pop("inertia"))
            x = e.x0 if x0 is None else x0
            e = replace(
                e, system=ex.rigid_body(inertia), parameters={**e.parameters, "inertia": tuple(inertia)},
                splitting=(ex.rigid_body_momentum(inertia),
                           ex.rigid_body_splitting(inertia, np.diag(ex.RIGID_KD), kp=ex.RIGID_KP),
                           np.concatenate([inertia * x[:3], x[3:]])),
            )
    elif name == "custom":
        if "factory" not in o:
            raise ConfigurationError("custom experiments need factory=module:callable")
        mod, _, attr = str(o.pop("factory")).partition(":")
        try:
            e = getattr(importlib.import_module(mod), attr)()
        except (ImportError, AttributeError) as exc:
            raise ConfigurationError(f"cannot load factory: {exc}") from exc
        if not isinstance(e, ex.Experiment):
            raise ConfigurationError("factory must return an Experiment")
    else:
        raise ConfigurationError(f"unknown experiment {name!r}")
    if o:
        raise ConfigurationError(f"unknown parameters for {name}: {sorted(o)}")
    if x0 is not None:
        if x0.shape != (e.system.state_dim,) or not np.all(np.isfinite(x0)):
            raise ConfigurationError(f"x0 needs {e.system.state_dim} finite entries, got {x0}")
        e = replace(e, x0=x0)
        if e.splitting is not None:
            msys, spec, _ = e.splitting
            inertia = np.asarray(e.parameters["inertia"], dtype=float)
            e = replace(e, splitting=(msys, spec, np.concatenate([inertia * e.x0[:3], e.x0[3:]])))
    return e


def _run_splitting(e, h, steps):
    if e.splitting is None:
        raise ConfigurationError(f"experiment {e.name!r} has no splitting; splitting is bundled for rigid-body only")
    msys, spec, z0 = e.splitting
    mtraj = integrate_splitting(spec, msys, z0, steps, h)
    inertia = np.asarray(e.parameters["inertia"], dtype=float)

    def to_velocity(z):
        return np.concatenate([z[:3] / inertia, z[3:]])

    recs = tuple(StepRecord(index=r.index, time=r.time, state=to_velocity(r.state), energy=r.energy)
                 for r in mtraj.records)
    return Trajectory(e.x0, float(e.system.hamiltonian(e.x0)), recs, h, "splitting")


def _trajectory(e, cfg, method, h, steps):
    method = _canonical_method(method)
    if method == "splitting":
        return _run_splitting(e, h, steps)
    return integrate(make_stepper(method, cfg.stages), e.system, e.law, e.x0, steps, cfg.stepper_config(h))


def _extra_columns(e, traj):
    if e.name == "rigid-body":
        with np.errstate(over="ignore"):
            return {"q_norm": np.linalg.norm(traj.states[:, 3:], axis=1)}
    return {}


def _prefix(cfg, method):
    label = f"collocation-{cfg.stages}" if _canonical_method(method) == "collocation" else method
    return f"{cfg.experiment}_{label}"


def run_experiment(cfg):
    """Run one method; write trajectory and ledger CSVs; return a :class:`RunResult`.

    A failed step does not raise: the partial trajectory is written and the
    failure is stored in ``RunResult.failure``.
    """
    e = build_experiment(cfg.experiment, cfg.overrides)
    h = cfg.h if cfg.h is not None else e.h
    steps = cfg.steps if cfg.steps is not None else e.steps
    failure = None
    try:
        traj = _trajectory(e, cfg, cfg.method, h, steps)
    except StepFailure as exc:
        failure = exc
        traj = exc.trajectory
        if traj is None:
            raise
    files = []
    ledger = None
    if traj.records and traj.records[0].has_stages:
        ledger = build_ledger(traj)
    if cfg.out is not None:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        base = out / _prefix(cfg, cfg.method)
        write_trajectory(f"{base}_trajectory.csv", traj, e.system, e.law, _extra_columns(e, traj))
        files.append(f"{base}_trajectory.csv")
        if ledger is not None:
            write_ledger(f"{base}_ledger.csv", ledger)
            files.append(f"{base}_ledger.csv")

    summary = {
        "experiment": cfg.experiment,
        "method": _prefix(cfg, cfg.method).split("_", 1)[1],
        "h": h,
        "steps_completed": len(traj),
        "steps_requested": steps,
        "H_initial": traj.initial_energy,
        "H_final": traj.energies[-1],
    }
    if ledger is not None:
        s = ledger.summary()
        summary.update(max_abs_residual=s.max_abs_residual, A_ext=s.external_work,
                       closure_defect=s.closure_defect, dissipation_total=s.total_dissipation)
        its = [r.solver_iterations for r in traj.records]
        summary.update(solver_iterations_mean=float(np.mean(its)), solver_iterations_max=int(np.max(its)))
    else:
        summary["ledger"] = "n/a (no stage data)"
    if traj.records:
        summary["energy_increase_steps"] = lyapunov_decrease(traj).violations
    if cfg.experiment == "pendulum":
        summary["rotation_count"] = rotation_count(traj.final_state[0])
    if cfg.experiment == "rigid-body":
        with np.errstate(over="ignore", invalid="ignore"):
            qn = np.linalg.norm(traj.states[:, 3:], axis=1)
        summary["q_norm_drift"] = float(np.max(np.abs(qn - qn[0])))
    if failure is not None:
        summary["failed_step"] = failure.index
    return RunResult(traj, ledger, summary, files, failure)


def rotation_count(q):
    """Number of full turns, ``round(q / 2 pi)``."""
    return int(round(float(q) / (2.0 * math.pi)))


def compare_methods(cfg, methods=None):
    """Run several methods against the reference solution.

    Writes ``<experiment>_comparison.csv`` with the oracle state and energy
    and, per method, the state, ``|H - H_oracle|`` and the input.  Returns
    ``(columns, rows, failures)`` where ``rows`` is one summary dict per method.
    Methods that fail keep their partial data, padded with ``nan``.
    """
    methods = list(methods if methods is not None else cfg.compare)
    if not methods:
        raise ConfigurationError("no methods to compare")
    e = build_experiment(cfg.experiment, cfg.overrides)
    h = cfg.h if cfg.h is not None else e.h
    steps = cfg.steps if cfg.steps is not None else e.steps
    times = np.arange(steps + 1) * h
    max_step = cfg.oracle_h if cfg.oracle_h is not None else np.inf
    ref = reference_solution(e.system, e.law, e.x0, times, max_step=max_step)
    h_ref = np.asarray(e.system.hamiltonian(ref), dtype=float).reshape(-1)
    if not e.system.vectorized:
        h_ref = np.array([e.system.hamiltonian(x) for x in ref])

    n, m = e.system.state_dim, e.system.port_dim
    cols = {"step": np.arange(steps + 1), "t": times}
    for j in range(n):
        cols[f"oracle:x_{j + 1}"] = ref[:, j]
    cols["oracle:H"] = h_ref
    rows, failures = [], []
    for method in methods:
        label = _prefix(cfg, method).split("_", 1)[1]
        try:
            traj = _trajectory(e, cfg, method, h, steps)
        except StepFailure as exc:
            failures.append((label, exc))
            traj = exc.trajectory
            if traj is None:
                continue
        tc = trajectory_columns(traj, e.system, e.law)
        k = len(traj) + 1
        pad = np.full(steps + 1, np.nan)
        for j in range(n):
            col = pad.copy()
            col[:k] = tc[f"x_{j + 1}"]
            cols[f"{label}:x_{j + 1}"] = col
        err = pad.copy()
        err[:k] = np.abs(traj.energies - h_ref[:k])
        cols[f"{label}:H_err"] = err
        for j in range(m):
            col = pad.copy()
            col[:k] = tc[f"u_{j + 1}"]
            cols[f"{label}:u_{j + 1}"] = col
        row = {"method": label, "max_H_err": float(np.nanmax(err)), "H_final": float(traj.energies[-1]),
               "steps_completed": len(traj)}
        if cfg.experiment == "pendulum":
            row["rotation_count"] = rotation_count(traj.final_state[0])
        rows.append(row)
    if cfg.experiment == "pendulum":
        rows.append({"method": "oracle", "max_H_err": 0.0, "H_final": float(h_ref[-1]),
                     "steps_completed": steps, "rotation_count": rotation_count(ref[-1, 0])})
    if cfg.out is not None:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        write_table(out / f"{cfg.experiment}_comparison.csv", cols)
    return cols, rows, failures


def load_config_file(path):
    """Parse ``key = value`` lines (``#`` starts a comment) into a dict of strings."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(message)


def build_parser():
    p = _Parser(prog="dphs-bench", description="Passivity-preserving integrators for port-Hamiltonian systems.")
    p.add_argument("name", nargs="?", help="experiment (same as --experiment)")
    p.add_argument("--experiment", choices=EXPERIMENT_NAMES)
    p.add_argument("--method", help=f"one of {', '.join(METHODS)} (default avfphs)")
    p.add_argument("--h", type=float, help="step size")
    p.add_argument("--steps", type=int, help="number of steps")
    p.add_argument("--stages", type=int, help="collocation stages (default 2)")
    p.add_argument("--tol", type=float, help="solver tolerance (default 1e-12)")
    p.add_argument("--max-iter", type=int, help="solver iterations per step (default 100)")
    p.add_argument("--solver", choices=("fixed-point", "newton"))
    p.add_argument("--out", help="output directory (default: current directory)")
    p.add_argument("--compare", help="comma-separated methods to compare against the reference solution")
    p.add_argument("--oracle-h", type=float, help="largest step of the reference solver")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="parameter override, e.g. x0=2.8,1.4 or gain=0.02 (repeatable)")
    p.add_argument("--config", help="file with key = value lines; command-line flags take precedence")
    return p


_FIELDS = {
    "experiment": str, "method": str, "h": float, "steps": int, "stages": int, "tol": float,
    "max_iter": int, "solver": str, "out": str, "compare": str, "oracle_h": float,
}


def config_from_args(argv=None):
    args = build_parser().parse_args(argv)
    values, overrides = {}, {}
    if args.config:
        for k, v in load_config_file(args.config).items():
            if k in _FIELDS:
                try:
                    values[k] = _FIELDS[k](v)
                except ValueError as exc:
                    raise ConfigurationError(f"bad value for {k}: {v!r}") from exc
            else:
                overrides[k] = v
    for k in _FIELDS:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
    for item in args.set:
        if "=" not in item:
            raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if args.name:
        if args.experiment and args.experiment != args.name:
            raise ConfigurationError("positional experiment and --experiment disagree")
        values["experiment"] = args.name
    if "experiment" not in values:
        raise ConfigurationError("no experiment given")
    compare = values.pop("compare", "")
    compare = tuple(s.strip() for s in compare.split(",") if s.strip()) if compare else ()
    return ExperimentConfig(compare=compare, overrides=overrides, **values)


def _print_summary(summary, stream):
    for k, v in summary.items():
        if isinstance(v, float):
            v = f"{v:.6e}"
        print(f"{k}: {v}", file=stream)


def _print_rows(rows, stream):
    keys = list(dict.fromkeys(k for r in rows for k in r))
    print("  ".join(f"{k:>18s}" for k in keys), file=stream)
    for r in rows:
        cells = []
        for k in keys:
            v = r.get(k, "")
            cells.append(f"{v:>18.6e}" if isinstance(v, float) else f"{str(v):>18s}")
        print("  ".join(cells), file=stream)


def main(argv=None):
    try:
        cfg = config_from_args(argv)
        if cfg.compare:
            _, rows, failures = compare_methods(cfg)
            _print_rows(rows, sys.stdout)
            for label, exc in failures:
                print(f"error: {label} failed at step {exc.index}: {exc}", file=sys.stderr)
            return 2 if failures else 0
        res = run_experiment(cfg)
        _print_summary(res.summary, sys.stdout)
        for f in res.files:
            print(f"wrote {f}", file=sys.stderr)
        if res.failure is not None:
            print(f"error: step {res.failure.index} failed: {res.failure}", file=sys.stderr)
            return 2
        return 0
    except (ConfigurationError, ContractViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except StepFailure as exc:
        print(f"error: step {exc.index} failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
