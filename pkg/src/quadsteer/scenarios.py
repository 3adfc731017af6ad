"""Scenario files, the run pipeline, and plot-data emission.

A scenario is a TOML file selecting either the reduced-order steering loop
(event-based MPC on the template model alone) or the full stack (MPC +
virtual-constraints controller + rigid-body simulation).  `run_scenario`
executes one file and writes, into the output directory:

    report.json   versioned machine-readable summary (schema 1); lists every
                  other deterministic output in its "manifest" key
    timing.json   wall-clock statistics, quarantined here so everything in
                  the manifest is byte-stable across identical runs
    samples.csv   reduced mode: k, zeta, r_x, rdot_x, r_y, rdot_y, u_x, u_y,
                  solve_flag (one row per sample)
    events.csv    one row per MPC event: index, sample, zeta, measured state,
                  objective, iterations, and the applied COP block
    sim.csv       full mode: t, q..., qd..., com_x, com_vx, com_y, com_vy,
                  per-foot forces (one row per simulation step)
    ctrl.csv      full mode: t, s, zeta, y_norm, ydot_norm, omega_norm,
                  torques, planned forces (one row per control step)

`emit_plotdata` turns a written report into whitespace-delimited files for
external plotting, one per figure family:

    plot_com_cop.dat   k, com state, applied COP
    plot_outputs.dat   t, output norms, slack, torques        (full mode)
    plot_grf.dat       t, per-foot ground reaction forces     (full mode)
    plot_plan.dat      blank-line-separated blocks: COM path; footholds;
                       one closed support polygon per domain

The random seed is recorded in the report and reserved for stochastic
extensions; every pipeline stage is deterministic, which is what makes the
byte-stability guarantee possible in the first place.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:          # Python < 3.11
    import tomli as tomllib

from .gait import (DEFAULT_STEPS, build_trot_graph, cop_parametrization,
                   domain_indicator, hull_membership)
from .lip import LipParams, cone_halfspaces, equilibrium_state
from .mpc import MpcConfig, MpcInfeasibleError, rollout_closed_loop
from .rigid_body import default_robot_model
from .runner import RunnerConfig, run_full_order
from .vc import AllocatorConfig, Gains

REPORT_SCHEMA = 1

MODES = ("reduced_order", "full_order")
CONTACT_MODELS = ("rigid", "compliant")


class ScenarioError(ValueError):
    """Validation failure carrying the full itemized error list."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid scenario:\n" + "\n".join(f"  - {e}" for e in self.errors))


@dataclass(frozen=True)
class Scenario:
    """One fully-specified experiment.  Defaults follow the reference gait."""

    name: str
    mode: str = "full_order"
    # gait
    direction: str = "forward"
    step: tuple | None = None            # None: the direction's default step
    num_domains: int = 20
    # timing
    sample_time: float = 0.08
    grid_count: int = 4
    horizon: int = 8
    control_rate_hz: float = 1000.0
    latency: float = 0.0
    # template model
    com_height: float = 0.5
    gravity: float = 9.81
    total_mass: float = 32.0
    friction: float = 0.4
    # MPC weights
    terminal_weight: float = 1000.0
    state_weight: float = 1.0
    cop_weight: float = 1.0
    lambda_weight: float = 0.01
    # reduced-order loop
    extra_events: int = 10               # events granted beyond the gait's M
    convergence_tol: float = 1e-3
    # full-order loop
    contact_model: str = "rigid"
    kp: float = 100.0
    kd: float = 20.0
    slack_weight: float = 1.0e7
    torque_limit: float | None = None    # None: the model's limit
    output_bound: float = 0.05
    settle_events: int = 4
    dt_sim: float = 1e-3
    # bookkeeping
    seed: int = 0
    out_dir: str | None = None
    note: str = ""

    def lip_params(self) -> LipParams:
        return LipParams(com_height=self.com_height, gravity=self.gravity,
                         total_mass=self.total_mass, friction_coeff=self.friction,
                         sample_time=self.sample_time)

    def mpc_config(self) -> MpcConfig:
        return MpcConfig(horizon=self.horizon, state_weight=self.state_weight,
                         terminal_weight=self.terminal_weight,
                         cop_weight=self.cop_weight, lambda_weight=self.lambda_weight)

    def gait_graph(self):
        return build_trot_graph(direction=self.direction, step=self.step,
                                num_domains=self.num_domains,
                                grid_count=self.grid_count)

    def runner_config(self) -> RunnerConfig:
        return RunnerConfig(
            dt_sim=self.dt_sim, control_rate_hz=self.control_rate_hz,
            latency=self.latency, settle_events=self.settle_events,
            output_bound=self.output_bound, contact_model=self.contact_model,
            gains=Gains(kp=self.kp, kd=self.kd),
            allocator=AllocatorConfig(slack_weight=self.slack_weight,
                                      friction_coeff=self.friction,
                                      torque_limit=self.torque_limit))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["step"] is not None:
            d["step"] = list(d["step"])
        return d


def _get(table: dict, section: str, key: str, kind, errors: list, default):
    sub = table.get(section, {})
    if not isinstance(sub, dict):
        errors.append(f"[{section}] must be a table")
        return default
    if key not in sub:
        return default
    value = sub.pop(key)
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if kind is str and isinstance(value, str):
        return value
    errors.append(f"{section}.{key}: expected {kind.__name__}, got {value!r}")
    return default


def scenario_from_dict(data: dict, name: str = "scenario") -> Scenario:
    """Build and validate a Scenario; raises ScenarioError with every problem."""
    if not isinstance(data, dict):
        raise ScenarioError(["scenario file must contain a TOML table"])
    data = {k: (dict(v) if isinstance(v, dict) else v) for k, v in data.items()}
    errors: list[str] = []
    kw: dict = {}

    kw["name"] = data.pop("name", name)
    if not isinstance(kw["name"], str) or not kw["name"]:
        errors.append("name: must be a non-empty string")
        kw["name"] = name
    kw["mode"] = data.pop("mode", "full_order")
    if kw["mode"] not in MODES:
        errors.append(f"mode: {kw['mode']!r} is not one of {MODES}")
        kw["mode"] = "full_order"
    seed = data.pop("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        errors.append("seed: must be an integer")
        seed = 0
    kw["seed"] = seed
    note = data.pop("note", "")
    if not isinstance(note, str):
        errors.append("note: must be a string")
        note = ""
    kw["note"] = note
    out_dir = data.pop("out_dir", None)
    if out_dir is not None and not isinstance(out_dir, str):
        errors.append("out_dir: must be a string path")
        out_dir = None
    kw["out_dir"] = out_dir

    kw["direction"] = _get(data, "gait", "direction", str, errors, "forward")
    if kw["direction"] not in DEFAULT_STEPS:
        errors.append(f"gait.direction: {kw['direction']!r} is not one of "
                      f"{sorted(DEFAULT_STEPS)}")
        kw["direction"] = "forward"
    step = data.get("gait", {}).pop("step", None) if isinstance(data.get("gait"), dict) else None
    if step is not None:
        try:
            step = tuple(float(v) for v in step)
            if len(step) != 2:
                raise ValueError
        except (TypeError, ValueError):
            errors.append("gait.step: must be a pair of numbers [dx, dy]")
            step = None
    kw["step"] = step
    kw["num_domains"] = _get(data, "gait", "num_domains", int, errors, 20)
    if kw["num_domains"] < 2:
        errors.append("gait.num_domains: need at least 2 (the two four-foot stances)")
        kw["num_domains"] = 2

    kw["sample_time"] = _get(data, "timing", "sample_time", float, errors, 0.08)
    kw["grid_count"] = _get(data, "timing", "grid_count", int, errors, 4)
    kw["horizon"] = _get(data, "timing", "horizon", int, errors, 8)
    kw["control_rate_hz"] = _get(data, "timing", "control_rate_hz", float, errors, 1000.0)
    kw["latency"] = _get(data, "timing", "latency", float, errors, 0.0)
    kw["dt_sim"] = _get(data, "timing", "dt_sim", float, errors, 1e-3)

    kw["com_height"] = _get(data, "pendulum", "com_height", float, errors, 0.5)
    kw["gravity"] = _get(data, "pendulum", "gravity", float, errors, 9.81)
    kw["total_mass"] = _get(data, "pendulum", "total_mass", float, errors, 32.0)
    kw["friction"] = _get(data, "pendulum", "friction", float, errors, 0.4)

    kw["terminal_weight"] = _get(data, "mpc", "terminal_weight", float, errors, 1000.0)
    kw["state_weight"] = _get(data, "mpc", "state_weight", float, errors, 1.0)
    kw["cop_weight"] = _get(data, "mpc", "cop_weight", float, errors, 1.0)
    kw["lambda_weight"] = _get(data, "mpc", "lambda_weight", float, errors, 0.01)
    kw["extra_events"] = _get(data, "mpc", "extra_events", int, errors, 10)
    kw["convergence_tol"] = _get(data, "mpc", "convergence_tol", float, errors, 1e-3)

    kw["contact_model"] = _get(data, "controller", "contact_model", str, errors, "rigid")
    if kw["contact_model"] not in CONTACT_MODELS:
        errors.append(f"controller.contact_model: {kw['contact_model']!r} is not "
                      f"one of {CONTACT_MODELS}")
        kw["contact_model"] = "rigid"
    kw["kp"] = _get(data, "controller", "kp", float, errors, 100.0)
    kw["kd"] = _get(data, "controller", "kd", float, errors, 20.0)
    kw["slack_weight"] = _get(data, "controller", "slack_weight", float, errors, 1.0e7)
    limit = data.get("controller", {}).pop("torque_limit", None) \
        if isinstance(data.get("controller"), dict) else None
    if limit is not None and not isinstance(limit, (int, float)):
        errors.append("controller.torque_limit: must be a number")
        limit = None
    kw["torque_limit"] = None if limit is None else float(limit)
    kw["output_bound"] = _get(data, "controller", "output_bound", float, errors, 0.05)
    kw["settle_events"] = _get(data, "controller", "settle_events", int, errors, 4)

    # numeric sanity
    for key, low in (("sample_time", 0.0), ("control_rate_hz", 0.0),
                     ("com_height", 0.0), ("gravity", 0.0), ("total_mass", 0.0),
                     ("friction", 0.0), ("dt_sim", 0.0), ("convergence_tol", 0.0),
                     ("slack_weight", 0.0), ("output_bound", 0.0)):
        if not kw[key] > low:
            errors.append(f"{key}: must be > {low}, got {kw[key]}")
    for key in ("grid_count", "horizon"):
        if kw[key] < 1:
            errors.append(f"{key}: must be at least 1, got {kw[key]}")
    if kw["latency"] < 0:
        errors.append(f"latency: must be nonnegative, got {kw['latency']}")
    if kw["extra_events"] < 0:
        errors.append(f"extra_events: must be nonnegative, got {kw['extra_events']}")
    if kw["settle_events"] < 0:
        errors.append(f"settle_events: must be nonnegative, got {kw['settle_events']}")
    if kw["horizon"] < kw["grid_count"]:
        errors.append(f"horizon: must cover one domain of samples "
                      f"({kw['horizon']} < grid_count {kw['grid_count']})")
    seg = kw["grid_count"] * kw["sample_time"]
    if seg > 0 and kw["control_rate_hz"] < 1.0 / seg:
        errors.append(f"control_rate_hz: {kw['control_rate_hz']} is below one "
                      f"solve per domain (1 / (grid_count * sample_time) = "
                      f"{1.0 / seg:.3f} Hz)")
    if kw["mode"] == "full_order" and kw["dt_sim"] > 0 and kw["control_rate_hz"] > 0:
        period = 1.0 / kw["control_rate_hz"]
        steps = period / kw["dt_sim"]
        if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
            errors.append(f"control_rate_hz: period {period} s is not an integer "
                          f"multiple of dt_sim = {kw['dt_sim']} s")
        if kw["latency"] > 0:
            steps = kw["latency"] / kw["dt_sim"]
            if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
                errors.append(f"latency: {kw['latency']} s is not an integer "
                              f"multiple of dt_sim = {kw['dt_sim']} s")

    # anything left over is a typo worth flagging
    for section, sub in data.items():
        if isinstance(sub, dict):
            for key in sub:
                errors.append(f"{section}.{key}: unknown key")
        elif section not in ():
            errors.append(f"{section}: unknown key")

    if errors:
        raise ScenarioError(errors)
    return Scenario(**kw)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ScenarioError([f"scenario file not found: {path}"])
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError([f"TOML parse error in {path}: {exc}"])
    return scenario_from_dict(data, name=path.stem)


# ---------------------------------------------------------------------------
# bundled scenarios

_BUNDLE_DIR = Path(__file__).parent / "scenarios"


def bundled_scenario_path(name: str) -> Path:
    """Resolve a bundled scenario by bare name (with or without .toml)."""
    stem = name[:-5] if name.endswith(".toml") else name
    path = _BUNDLE_DIR / f"{stem}.toml"
    if not path.is_file():
        known = ", ".join(sorted(p.stem for p in _BUNDLE_DIR.glob("*.toml")))
        raise ScenarioError([f"no bundled scenario named {name!r} (have: {known})"])
    return path


def list_scenarios() -> list[dict]:
    """Catalog of bundled scenarios: name, mode, direction, contact, note."""
    catalog = []
    for path in sorted(_BUNDLE_DIR.glob("*.toml")):
        sc = load_scenario(path)
        catalog.append({
            "name": sc.name,
            "mode": sc.mode,
            "direction": sc.direction,
            "contact_model": sc.contact_model if sc.mode == "full_order" else None,
            "control_rate_hz": sc.control_rate_hz if sc.mode == "full_order" else None,
            "latency": sc.latency if sc.mode == "full_order" else None,
            "num_domains": sc.num_domains,
            "note": sc.note,
            "path": str(path),
        })
    return catalog


# ---------------------------------------------------------------------------
# running

@dataclass
class RunReport:
    """In-memory mirror of report.json plus the wall-clock side channel."""

    scenario: Scenario
    completed: bool
    converged: bool
    final_error: float
    num_events: int
    mpc_solves: int
    allocator_solves: int
    first_convergence_event: int | None
    max_output_norm: float | None
    violations: dict
    failure: str | None
    gait: dict
    manifest: tuple
    out_dir: str
    timing: dict = field(default_factory=dict)

    @property
    def report_path(self) -> str:
        return str(Path(self.out_dir) / "report.json")

    def to_json_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "scenario": self.scenario.to_dict(),
            "completed": self.completed,
            "converged": self.converged,
            "final_error": self.final_error,
            "num_events": self.num_events,
            "mpc_solves": self.mpc_solves,
            "allocator_solves": self.allocator_solves,
            "first_convergence_event": self.first_convergence_event,
            "max_output_norm": self.max_output_norm,
            "violations": self.violations,
            "failure": self.failure,
            "gait": self.gait,
            "manifest": list(self.manifest),
            "timing_file": "timing.json",
            "note": self.scenario.note,
        }


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _percentiles(us: np.ndarray) -> dict:
    if us.size == 0:
        return {}
    return {"p50_us": float(np.percentile(us, 50)),
            "p90_us": float(np.percentile(us, 90)),
            "p99_us": float(np.percentile(us, 99)),
            "max_us": float(us.max()),
            "count": int(us.size)}


def _write_events_csv(path, events, grid_count):
    cop_cols = [f"u{j}_{ax}" for j in range(grid_count) for ax in ("x", "y")]
    with open(path, "w") as fh:
        fh.write("index,sample,zeta,r_x,rdot_x,r_y,rdot_y,objective,iterations,"
                 + ",".join(cop_cols) + "\n")
        for ev in events:
            x = ev.x_measured
            cops = np.asarray(ev.plan_cops).reshape(-1)
            fh.write(f"{ev.index},{ev.sample},{ev.zeta},"
                     f"{x[0]:.17g},{x[1]:.17g},{x[2]:.17g},{x[3]:.17g},"
                     f"{ev.objective:.17g},{ev.qp_iterations},"
                     + ",".join(f"{v:.17g}" for v in cops) + "\n")


def _run_reduced(scenario: Scenario, out: Path, verbose) -> RunReport:
    params = scenario.lip_params()
    graph = scenario.gait_graph()
    config = scenario.mpc_config()
    x0 = equilibrium_state(graph.domains[0].centroid())
    total_events = scenario.num_domains + scenario.extra_events
    t0 = time.perf_counter()
    failure = None
    try:
        roll = rollout_closed_loop(config, graph, params, x0, total_events)
    except MpcInfeasibleError as exc:
        raise RuntimeError(str(exc)) from exc
    wall = time.perf_counter() - t0

    errors = roll.errors()
    below = np.flatnonzero(errors < scenario.convergence_tol)
    converged = bool(below.size and errors[below[0]:].max() < scenario.convergence_tol)
    first_event = int(np.ceil(below[0] / graph.grid_count)) if below.size else None

    # constraint audits: COP in its support polygon, (x, u) in the linearized cone
    Phi, Psi, eta = cone_halfspaces(params)
    hull_viol = 0
    cone_viol = 0
    for k in range(roll.num_samples):
        zeta = domain_indicator(k, graph.num_domains, graph.grid_count)
        C, _ = cop_parametrization(graph.domain(zeta))
        if not hull_membership(roll.cops[k], C, tol=1e-7).inside:
            hull_viol += 1
        if np.any(Phi @ roll.states[k] + Psi @ roll.cops[k] > eta + 1e-9):
            cone_viol += 1

    roll.write_csv(out / "samples.csv")
    with open(out / "events.csv", "w") as fh:
        fh.write("index,sample,zeta,objective\n")
        for m in range(roll.solve_count):
            k = int(roll.solve_samples[m])
            fh.write(f"{m},{k},{int(roll.zetas[k])},{roll.objectives[m]:.17g}\n")

    report = RunReport(
        scenario=scenario, completed=True, converged=converged,
        final_error=float(errors[-1]), num_events=total_events,
        mpc_solves=roll.solve_count, allocator_solves=0,
        first_convergence_event=first_event,
        max_output_norm=None,
        violations={"cop_outside_hull": hull_viol, "cone": cone_viol},
        failure=failure, gait=graph.to_dict(),
        manifest=("samples.csv", "events.csv"),
        out_dir=str(out),
        timing={"total_wall_s": wall,
                "mean_event_ms": wall * 1e3 / max(roll.solve_count, 1)})
    return report


def _run_full(scenario: Scenario, out: Path, verbose) -> RunReport:
    params = scenario.lip_params()
    graph = scenario.gait_graph()
    config = scenario.mpc_config()
    model = default_robot_model()
    runner_cfg = scenario.runner_config()
    progress = print if verbose else None
    t0 = time.perf_counter()
    res = run_full_order(model, graph, params, config, runner_cfg, progress=progress)
    wall = time.perf_counter() - t0

    pyramid_viol = int(np.sum(np.nan_to_num(res.pyramid_violation) > 1e-7))
    resid = res.stance_residual
    resid_viol = int(np.sum(resid[np.isfinite(resid)] > 1e-8)) if resid.size else 0
    violations = {"pyramid": pyramid_viol, "stance_residual": resid_viol}

    res.write_trajectory_csv(out / "sim.csv")
    res.write_diagnostics_csv(out / "ctrl.csv")
    _write_events_csv(out / "events.csv", res.events, graph.grid_count)

    converged = res.completed and res.final_com_error < 0.02
    report = RunReport(
        scenario=scenario, completed=res.completed, converged=converged,
        final_error=res.final_com_error, num_events=res.num_events,
        mpc_solves=len(res.events), allocator_solves=int(res.ctrl_times.size),
        first_convergence_event=None,
        max_output_norm=res.max_output_norm,
        violations=violations,
        failure=res.abort_reason, gait=graph.to_dict(),
        manifest=("sim.csv", "ctrl.csv", "events.csv"),
        out_dir=str(out),
        timing={"total_wall_s": wall,
                "mpc_solve": _percentiles(np.array([e.solve_us for e in res.events])),
                "allocator_solve": _percentiles(res.ctrl_solve_us)})
    return report


def run_scenario(path, out_dir=None, seed: int | None = None,
                 verbose: bool = False) -> RunReport:
    """Execute one scenario file; returns the report after writing all files.

    `out_dir` overrides the scenario's own setting (default: runs/<name>).
    `seed` overrides the recorded seed.  Raises ScenarioError on invalid
    configuration; solver infeasibility produces a *failed report*, not an
    exception, so the offending time stamp lands in report.json.
    """
    scenario = load_scenario(path)
    if seed is not None:
        scenario = dataclasses.replace(scenario, seed=seed)
    out = Path(out_dir if out_dir is not None
               else scenario.out_dir if scenario.out_dir
               else Path("runs") / scenario.name)
    out.mkdir(parents=True, exist_ok=True)

    if scenario.mode == "reduced_order":
        report = _run_reduced(scenario, out, verbose)
    else:
        report = _run_full(scenario, out, verbose)

    _write_json(out / "report.json", report.to_json_dict())
    _write_json(out / "timing.json", report.timing)
    return report


# ---------------------------------------------------------------------------
# plot data

def _read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def _cols(header, data, names):
    return np.column_stack([data[:, header.index(n)] for n in names])


def _write_dat(path, header: str, blocks):
    """Whitespace-delimited, blank-line-separated blocks (gnuplot indexable)."""
    with open(path, "w") as fh:
        fh.write(f"# {header}\n")
        for i, block in enumerate(blocks):
            if i:
                fh.write("\n\n")
            for row in np.atleast_2d(block):
                fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def _support_polygons(gait: dict):
    polys = []
    for dom in gait["domains"]:
        # footholds are stored 2 x n_c; one row per foot here
        pts = np.asarray(dom["footholds"], dtype=float).T
        if pts.shape[0] < 3:
            polys.append(np.vstack([pts, pts[:1]]))
            continue
        center = pts.mean(axis=0)
        order = np.argsort(np.arctan2(pts[:, 1] - center[1], pts[:, 0] - center[0]))
        hull = pts[order]
        polys.append(np.vstack([hull, hull[:1]]))
    return polys


def emit_plotdata(report, out_dir=None) -> list[str]:
    """Write plotting files next to (or into `out_dir` from) a finished run.

    Accepts a RunReport or a path to a report.json.  Returns the list of
    files written.  Reduced-order runs produce the COM/COP and plan files;
    full-order runs produce all four.
    """
    if isinstance(report, RunReport):
        report_dict = report.to_json_dict()
        src = Path(report.out_dir)
    else:
        src = Path(report)
        if src.is_dir():
            src = src / "report.json"
        with open(src) as fh:
            report_dict = json.load(fh)
        src = src.parent
    if report_dict.get("schema") != REPORT_SCHEMA:
        raise ValueError(f"unsupported report schema {report_dict.get('schema')!r}")
    out = Path(out_dir) if out_dir is not None else src
    out.mkdir(parents=True, exist_ok=True)
    mode = report_dict["scenario"]["mode"]
    gait = report_dict["gait"]
    grid_count = report_dict["scenario"]["grid_count"]
    written = []

    if mode == "reduced_order":
        header, data = _read_csv(src / "samples.csv")
        k = data[:, header.index("k")]
        state = _cols(header, data, ["r_x", "rdot_x", "r_y", "rdot_y"])
        cop = _cols(header, data, ["u_x", "u_y"])
        _write_dat(out / "plot_com_cop.dat",
                   "k r_x rdot_x r_y rdot_y u_x u_y",
                   [np.column_stack([k, state, cop])])
        written.append("plot_com_cop.dat")
        path_xy = state[:, [0, 2]]
    else:
        sheader, sdata = _read_csv(src / "sim.csv")
        eheader, edata = _read_csv(src / "events.csv")
        com = _cols(sheader, sdata, ["com_x", "com_vx", "com_y", "com_vy"])
        # one COP row per sample: each event carries its applied block
        cops = []
        for row in edata:
            for j in range(grid_count):
                cops.append([row[eheader.index(f"u{j}_x")],
                             row[eheader.index(f"u{j}_y")]])
        cops = np.asarray(cops)
        steps_per_sample = max(1, (sdata.shape[0]) // max(cops.shape[0], 1))
        sampled = com[::steps_per_sample][:cops.shape[0]]
        ks = np.arange(sampled.shape[0])
        _write_dat(out / "plot_com_cop.dat",
                   "k com_x com_vx com_y com_vy u_x u_y",
                   [np.column_stack([ks, sampled, cops[:sampled.shape[0]]])])
        written.append("plot_com_cop.dat")

        cheader, cdata = _read_csv(src / "ctrl.csv")
        tau_cols = [c for c in cheader if c.startswith("tau")]
        _write_dat(out / "plot_outputs.dat",
                   "t y_norm ydot_norm omega_norm " + " ".join(tau_cols),
                   [_cols(cheader, cdata,
                          ["t", "y_norm", "ydot_norm", "omega_norm"] + tau_cols)])
        written.append("plot_outputs.dat")

        force_cols = [c for c in sheader if c.startswith("F_")]
        _write_dat(out / "plot_grf.dat",
                   "t " + " ".join(force_cols),
                   [_cols(sheader, sdata, ["t"] + force_cols)])
        written.append("plot_grf.dat")
        path_xy = com[:, [0, 2]]

    footholds = np.unique(np.vstack([
        np.asarray(d["footholds"], dtype=float).T for d in gait["domains"]]), axis=0)
    blocks = [path_xy, footholds] + _support_polygons(gait)
    _write_dat(out / "plot_plan.dat",
               "blocks: 0 COM path (x y); 1 footholds; 2.. support polygons",
               blocks)
    written.append("plot_plan.dat")
    return written
