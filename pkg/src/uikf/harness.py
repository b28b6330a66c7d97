"""Experiment engine: paired-seed Monte-Carlo runs of KF, RKF, AL-RKF and AMM-KF.

Every filter in a replication consumes the same simulated trajectory, so
statistics are paired across filters. Seeds are ``base_seed + rep``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import scenarios as sc
from .al_rkf import ALParams, BoxConstraint, solve_constrained_gain
from .amm_kf import (DecisionState, ModeSet, ModeWeights, amm_step,
                     mode_log_likelihoods, update_weights_log)
from .errors import ConfigError, EmptyAfterBurnIn, NoConvergence, RankConditionError
from .lti_system import SystemModel, Trajectory, simulate, validate_rank
from .rkf import (GaussianBelief, estimate_input, innovation, kalman_update,
                  mvu_gain, predict, update_state)

log = logging.getLogger(__name__)

FILTERS = ("kf", "rkf", "al_rkf", "amm_kf")
SCENARIOS = ("airship", "drone")

# (Q position variances, R variances) of the six benchmark cells
QR_GRID = (
    ((0.05, 0.05), (0.05, 0.05)),
    ((0.05, 0.05), (0.05, 0.5)),
    ((0.05, 0.05), (0.5, 0.5)),
    ((0.05, 0.5), (0.05, 0.5)),
    ((0.05, 0.5), (0.5, 0.5)),
    ((0.5, 0.5), (0.5, 0.5)),
)

DEFAULT_FILTERS = {"airship": ("kf", "rkf", "al_rkf"), "drone": ("kf", "rkf", "amm_kf")}
DEFAULT_AL = {"sigma_growth": 10.0}


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "airship"
    params: dict = field(default_factory=dict)
    # None picks the scenario default
    filters: tuple | None = None
    reps: int = 1
    base_seed: int = 0
    qr_grid: tuple | None = None
    burn_in: int = 5
    out: str = "out"
    format: str = "json"
    traces: str = "first"
    al: dict = field(default_factory=lambda: dict(DEFAULT_AL))

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.filters is None:
            object.__setattr__(self, "filters", DEFAULT_FILTERS[self.scenario])
        filters = tuple(self.filters)
        bad = [f for f in filters if f not in FILTERS]
        if bad or len(set(filters)) != len(filters):
            raise ConfigError(f"invalid filter list {list(filters)}")
        if self.scenario == "airship" and "amm_kf" in filters:
            raise ConfigError("amm_kf needs a discrete mode set; use the drone scenario")
        object.__setattr__(self, "filters", tuple(f for f in FILTERS if f in filters))
        if int(self.reps) < 1:
            raise ConfigError("reps must be at least 1")
        if int(self.base_seed) < 0:
            raise ConfigError("base_seed must be non-negative")
        if int(self.burn_in) < 0:
            raise ConfigError("burn_in must be non-negative")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if self.traces not in ("first", "all", "none"):
            raise ConfigError("traces must be first, all or none")
        if self.qr_grid is not None:
            grid = []
            for cell in self.qr_grid:
                try:
                    q, r = cell
                    grid.append((tuple(float(v) for v in q), tuple(float(v) for v in r)))
                except (TypeError, ValueError):
                    raise ConfigError(f"bad qr_grid cell {cell!r}") from None
            if not grid:
                raise ConfigError("qr_grid must not be empty")
            object.__setattr__(self, "qr_grid", tuple(grid))
        try:
            ALParams(**self.al)
        except TypeError as exc:
            raise ConfigError(f"bad al parameters: {exc}") from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        # build once to surface scenario parameter errors at load time
        scenario_config(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        data = dict(data)
        if isinstance(data.get("filters"), str):
            raise ConfigError("filters must be a list")
        if data.get("filters") is not None:
            data["filters"] = tuple(data["filters"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["filters"] = list(self.filters)
        if self.qr_grid is not None:
            d["qr_grid"] = [[list(q), list(r)] for q, r in self.qr_grid]
        return d

    @property
    def al_params(self) -> ALParams:
        return ALParams(**self.al)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return ExperimentConfig.from_dict(data)


def scenario_config(cfg: ExperimentConfig, q=None, r=None):
    cls = sc.AirshipConfig if cfg.scenario == "airship" else sc.DroneConfig
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(cfg.params) - known)
    if unknown:
        raise ConfigError(f"unknown {cfg.scenario} parameters: {unknown}")
    params = dict(cfg.params)
    for key in ("q", "r", "speed_bounds", "failure_magnitude"):
        if key in params:
            params[key] = tuple(np.atleast_1d(params[key]).tolist())
    if q is not None:
        params["q"] = tuple(q)
    if r is not None:
        params["r"] = tuple(r)
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    config: object
    model: SystemModel
    signal: object
    x0: np.ndarray
    P0: np.ndarray
    T: int
    dt: float
    box: BoxConstraint | None = None
    modes: ModeSet | None = None


def build_scenario(cfg: ExperimentConfig, q=None, r=None) -> ScenarioSpec:
    scfg = scenario_config(cfg, q, r)
    if cfg.scenario == "airship":
        model, signal, box = sc.build_airship(scfg)
        modes = None
    else:
        model, signal, modes = sc.build_drone(scfg)
        box = BoxConstraint(modes.modes.min(axis=0), modes.modes.max(axis=0))
    report = validate_rank(model)
    if not report:
        raise RankConditionError(report.message)
    return ScenarioSpec(cfg.scenario, scfg, model, signal, scfg.x0, scfg.P0, scfg.T, scfg.dt, box, modes)


@dataclass
class FilterTrace:
    """Per-step record of one replication.

    ``est`` maps filter name to a dict with arrays ``x`` (T, n), ``Pdiag``
    (T, n), ``d`` (T, m) and ``dcov`` (T, m). For ``kf`` the input columns
    hold the input implied by the KF innovation and the unbiased gain.
    """

    t: np.ndarray
    y: np.ndarray
    x_true: np.ndarray
    d_true: np.ndarray
    est: dict
    amm_w: np.ndarray | None = None
    amm_decision: np.ndarray | None = None
    amm_locked: np.ndarray | None = None
    kf_modep: np.ndarray | None = None
    al_clamped: np.ndarray | None = None
    seed: int | None = None

    @property
    def filters(self):
        return tuple(self.est)

    @property
    def T(self) -> int:
        return self.t.shape[0]


def _empty_run(T, n, m):
    return {"x": np.empty((T, n)), "Pdiag": np.empty((T, n)),
            "d": np.empty((T, m)), "dcov": np.empty((T, m))}


def _record(run, k, belief, d_hat):
    run["x"][k] = belief.mean
    run["Pdiag"][k] = np.diag(belief.cov)
    run["d"][k] = d_hat.mean
    run["dcov"][k] = np.diag(d_hat.cov)


def run_filters(spec: ScenarioSpec, traj: Trajectory, filters, al_params: ALParams | None = None) -> FilterTrace:
    """Run the selected filters on one shared trajectory."""
    model, T = spec.model, traj.T
    n, m = model.n, model.m
    est = {}
    extras = {}
    for name in FILTERS:
        if name not in filters:
            continue
        run = _empty_run(T, n, m)
        belief = GaussianBelief(np.array(spec.x0, dtype=float), np.array(spec.P0, dtype=float), 0)
        if name == "amm_kf":
            w = ModeWeights.uniform(len(spec.modes))
            dec = DecisionState(window_len=spec.config.window_len)
            W = np.empty((T, len(spec.modes)))
            D = np.empty((T, m))
            locked = np.zeros(T)
        if name == "al_rkf":
            clamped = np.zeros(T)
        if name == "kf" and spec.modes is not None:
            kf_w = ModeWeights.uniform(len(spec.modes))
            modep = np.empty((T, len(spec.modes)))
        for j in range(T):
            y = traj.measurements[j]
            k = belief.k + 1
            if name == "amm_kf":
                belief, w, dec, d = amm_step(belief, y, model, spec.modes, w, dec)
                W[j], D[j] = w.weights, d
                locked[j] = dec.locked is not None
                run["x"][j] = belief.mean
                run["Pdiag"][j] = np.diag(belief.cov)
                run["d"][j] = w.weights @ spec.modes.modes
                run["dcov"][j] = w.weights @ (spec.modes.modes - run["d"][j]) ** 2
                continue
            x_pred, P_pred = predict(belief, model)
            innov = innovation(y, x_pred, P_pred, model, k)
            CG = model.C_at(k) @ model.G_at(k - 1)
            if name == "kf":
                x, P, _ = kalman_update(x_pred, P_pred, innov, model, k)
                belief = GaussianBelief(x, P, k)
                d_hat = estimate_input(mvu_gain(CG, innov.cov, innov.cov_inv), innov)
                if spec.modes is not None:
                    # one-step hypothesis test on the blind filter's innovation
                    ll = mode_log_likelihoods(innov, model, spec.modes, k)
                    modep[j] = update_weights_log(kf_w, ll).weights
            elif name == "rkf":
                d_hat = estimate_input(mvu_gain(CG, innov.cov, innov.cov_inv), innov)
                belief = update_state(x_pred, P_pred, d_hat, innov, model, k)
            else:
                try:
                    res = solve_constrained_gain(innov.cov, CG, innov.value, spec.box, al_params,
                                                 innov.cov_inv)
                    d_hat = estimate_input(res.gain, innov)
                except NoConvergence as exc:
                    d_hat = estimate_input(exc.result.gain, innov)
                    d_hat = replace(d_hat, mean=spec.box.clamp(d_hat.mean))
                    clamped[j] = 1
                    log.warning("AL-RKF step %d did not converge; input clamped into the box", j)
                belief = update_state(x_pred, P_pred, d_hat, innov, model, k)
            _record(run, j, belief, d_hat)
        est[name] = run
        if name == "amm_kf":
            extras.update(amm_w=W, amm_decision=D, amm_locked=locked)
        elif name == "al_rkf":
            extras["al_clamped"] = clamped
        elif name == "kf" and spec.modes is not None:
            extras["kf_modep"] = modep
    t = spec.dt * np.arange(1, T + 1)
    return FilterTrace(t, np.array(traj.measurements), np.array(traj.states[1:]),
                       np.array(traj.inputs), est, seed=traj.seed, **extras)


def simulate_rep(spec: ScenarioSpec, seed: int) -> Trajectory:
    return simulate(spec.model, spec.x0, spec.signal, spec.T, seed=seed, dt=spec.dt)


@dataclass
class StatsTable:
    """Summary rows, one per (filter, Q, R) cell."""

    scenario: str
    burn_in: int
    reps: int
    filters: list
    rows: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "burn_in": self.burn_in, "reps": self.reps,
                "filters": list(self.filters), "rows": self.rows}

    def row(self, filt, q=None, r=None):
        for rw in self.rows:
            if rw["filter"] == filt and (q is None or tuple(rw["q"]) == tuple(q)) \
                    and (r is None or tuple(rw["r"]) == tuple(r)):
                return rw
        raise KeyError((filt, q, r))

    def cells(self):
        seen = []
        for rw in self.rows:
            key = (tuple(rw["q"]), tuple(rw["r"]))
            if key not in seen:
                seen.append(key)
        return seen

    def format_table(self) -> str:
        """Text table with one column per (Q, R) cell: mean then variance rows."""
        cells = self.cells()
        head = ["", "Q"] + [f"[{q[0]:g},{q[1]:g}]" for q, _ in cells]
        head2 = ["", "R"] + [f"[{r[0]:g},{r[1]:g}]" for _, r in cells]
        lines = [head, head2]
        for metric, label in (("pos_err_mean", "mean (m)"), ("pos_err_var", "variance (m^2)")):
            for f in self.filters:
                vals = [self.row(f, q, r)[metric] for q, r in cells]
                lines.append([label, f] + [f"{v:.4g}" for v in vals])
        widths = [max(len(row[i]) for row in lines) for i in range(len(head))]
        return "\n".join("  ".join(c.rjust(wd) for c, wd in zip(row, widths)) for row in lines) + "\n"


def _position_error(trace: FilterTrace, filt: str) -> np.ndarray:
    idx = list(sc.POSITION_INDEX)
    diff = trace.est[filt]["x"][:, idx] - trace.x_true[:, idx]
    return np.sqrt(np.sum(diff * diff, axis=1))


def summarize(traces, burn_in: int = 5, q=None, r=None, scenario: str = "") -> StatsTable:
    """Mean and population variance of the position error over reps x steps.

    Steps with index < ``burn_in`` are dropped. Input errors are reported per
    component; AMM-KF additionally reports the fraction of correct per-step
    decisions and the mean number of steps from the last truth switch until
    the decision locks on the true mode.
    """
    traces = list(traces)
    if not traces:
        raise EmptyAfterBurnIn("no traces to summarize")
    T = traces[0].T
    if burn_in >= T:
        raise EmptyAfterBurnIn(f"burn_in={burn_in} leaves no samples of T={T}")
    filters = list(traces[0].filters)
    table = StatsTable(scenario, burn_in, len(traces), filters)
    for f in filters:
        pos = np.concatenate([_position_error(tr, f)[burn_in:] for tr in traces])
        derr = np.concatenate([(tr.est[f]["d"] - tr.d_true)[burn_in:] for tr in traces])
        row = {
            "filter": f,
            "q": list(q) if q is not None else None,
            "r": list(r) if r is not None else None,
            "pos_err_mean": float(np.mean(pos)),
            "pos_err_var": float(np.var(pos)),
            "input_err_mean": np.mean(derr, axis=0).tolist(),
            "input_err_var": np.var(derr, axis=0).tolist(),
            "samples": int(pos.size),
        }
        if f == "al_rkf":
            row["clamped_steps"] = int(sum(tr.al_clamped.sum() for tr in traces))
        if f == "amm_kf":
            correct = np.concatenate([np.all(tr.amm_decision == tr.d_true, axis=1)[burn_in:]
                                      for tr in traces])
            row["decision_accuracy"] = float(np.mean(correct))
            lock_delays = [d for d in (_steps_to_lock(tr) for tr in traces) if d is not None]
            row["steps_to_lock"] = float(np.mean(lock_delays)) if lock_delays else None
            row["lock_fraction"] = len(lock_delays) / len(traces)
        table.rows.append(row)
    return table


def _steps_to_lock(trace: FilterTrace):
    changes = np.flatnonzero(np.any(np.diff(trace.d_true, axis=0) != 0, axis=1))
    start = int(changes[-1]) + 1 if changes.size else 0
    ok = (trace.amm_locked[start:] > 0) & np.all(trace.amm_decision[start:] == trace.d_true[start:], axis=1)
    hit = np.flatnonzero(ok)
    return int(hit[0]) if hit.size else None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    traces: list
    stats: StatsTable


def run_cell(cfg: ExperimentConfig, q=None, r=None, keep: str | None = None):
    """All replications of one (Q, R) cell. Returns (kept traces, StatsTable)."""
    spec = build_scenario(cfg, q, r)
    keep = cfg.traces if keep is None else keep
    al_params = cfg.al_params
    traces = []
    for rep in range(cfg.reps):
        traj = simulate_rep(spec, cfg.base_seed + rep)
        traces.append(run_filters(spec, traj, cfg.filters, al_params))
    q = spec.config.q if q is None else q
    r = spec.config.r if r is None else r
    stats = summarize(traces, cfg.burn_in, q, r, cfg.scenario)
    kept = traces if keep == "all" else traces[:1] if keep == "first" else []
    return kept, stats


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Monte-Carlo replications of the configured scenario (single Q/R cell)."""
    traces, stats = run_cell(cfg)
    return ExperimentResult(cfg, traces, stats)


def qr_sweep(cfg: ExperimentConfig):
    """Run every (Q, R) cell of ``cfg.qr_grid`` (default: the six benchmark cells).

    Returns ``(StatsTable, traces)`` where ``traces`` maps the cell index to
    the kept traces of that cell.
    """
    grid = cfg.qr_grid if cfg.qr_grid is not None else QR_GRID
    table = None
    traces = {}
    for i, (q, r) in enumerate(grid):
        kept, stats = run_cell(cfg, q, r)
        traces[i] = kept
        if table is None:
            table = StatsTable(cfg.scenario, cfg.burn_in, cfg.reps, list(cfg.filters))
        table.rows.extend(stats.rows)
    return table, traces


def decision_trial(separation: float, sigma: float, steps: int, seed: int = 0, true_mode: int = 0):
    """Per-step likelihood decisions between N(0, sigma^2) and N(separation, sigma^2).

    Samples come from ``true_mode``. Returns (accuracy, weight trajectory of the
    true mode under sequential Bayesian updating).
    """
    rng = np.random.default_rng(seed)
    means = np.array([0.0, separation])
    z = means[true_mode] + sigma * rng.standard_normal(steps)
    ll = -0.5 * ((z[:, None] - means[None, :]) / sigma) ** 2
    choice = np.argmax(ll, axis=1)
    w = ModeWeights.uniform(2)
    traj = np.empty(steps)
    for i in range(steps):
        w = update_weights_log(w, ll[i])
        traj[i] = w.weights[true_mode]
    return float(np.mean(choice == true_mode)), traj
