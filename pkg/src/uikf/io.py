"""Serialization of traces, statistics and plot data.

Numbers are written with 17 significant digits so a CSV read back gives
bit-identical floats. Files are written to a temporary name in the target
directory and renamed into place.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .amm_kf import detection_probability
from .harness import FILTERS, FilterTrace, StatsTable
from .scenarios import POSITION_INDEX, wind_force_to_speed

FMT = "%.17g"


def _fmt(v) -> str:
    return FMT % v


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _table_text(header, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    data = np.column_stack(columns) if columns else np.empty((0, 0))
    for row in data:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _block(prefix, arr):
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return [f"{prefix}_{i}" for i in range(arr.shape[1])], [arr[:, i] for i in range(arr.shape[1])]


def trace_columns(trace: FilterTrace):
    """Ordered (header, columns) of the trace CSV."""
    header, cols = ["t"], [trace.t]
    parts = [("y", trace.y), ("x_true", trace.x_true)]
    for f in trace.filters:
        parts += [(f"{f}_x", trace.est[f]["x"]), (f"{f}_Pdiag", trace.est[f]["Pdiag"])]
    parts.append(("d_true", trace.d_true))
    for f in trace.filters:
        parts += [(f"{f}_d", trace.est[f]["d"]), (f"{f}_dcov", trace.est[f]["dcov"])]
    if trace.amm_w is not None:
        parts += [("amm_w", trace.amm_w), ("amm_decision", trace.amm_decision),
                  ("amm_locked", trace.amm_locked)]
    if trace.kf_modep is not None:
        parts.append(("kf_modep", trace.kf_modep))
    if trace.al_clamped is not None:
        parts.append(("al_rkf_clamped", trace.al_clamped))
    for prefix, arr in parts:
        h, c = _block(prefix, arr)
        header += h
        cols += c
    return header, cols


def trace_to_csv(trace: FilterTrace) -> str:
    return _table_text(*trace_columns(trace))


def write_trace(trace: FilterTrace, path) -> None:
    atomic_write(path, trace_to_csv(trace))


def _group(header, data, prefix):
    idx = [i for i, h in enumerate(header)
           if h.startswith(prefix + "_") and h[len(prefix) + 1:].isdigit()]
    return data[:, idx] if idx else None


def read_trace(path) -> FilterTrace:
    """Parse a trace CSV back into a FilterTrace."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(len(rows) - 1, len(header))
    filters = [f for f in FILTERS if f"{f}_x_0" in header]
    est = {f: {key: _group(header, data, f"{f}_{key}") for key in ("x", "Pdiag", "d", "dcov")}
           for f in filters}
    locked = _group(header, data, "amm_locked")
    clamped = _group(header, data, "al_rkf_clamped")
    return FilterTrace(
        t=data[:, 0].copy(),
        y=_group(header, data, "y"),
        x_true=_group(header, data, "x_true"),
        d_true=_group(header, data, "d_true"),
        est=est,
        amm_w=_group(header, data, "amm_w"),
        amm_decision=_group(header, data, "amm_decision"),
        amm_locked=None if locked is None else locked[:, 0],
        kf_modep=_group(header, data, "kf_modep"),
        al_clamped=None if clamped is None else clamped[:, 0],
    )


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def stats_to_json(stats: StatsTable) -> str:
    return json.dumps(stats.to_dict(), indent=2, sort_keys=True, default=_json_default) + "\n"


def stats_to_csv(stats: StatsTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["filter", "q_0", "q_1", "r_0", "r_1", "pos_err_mean", "pos_err_var",
                "input_err_mean", "input_err_var", "decision_accuracy", "samples"])
    for row in stats.rows:
        q = row["q"] or [float("nan")] * 2
        r = row["r"] or [float("nan")] * 2
        acc = row.get("decision_accuracy")
        w.writerow([row["filter"], *map(_fmt, q), *map(_fmt, r),
                    _fmt(row["pos_err_mean"]), _fmt(row["pos_err_var"]),
                    ";".join(map(_fmt, row["input_err_mean"])),
                    ";".join(map(_fmt, row["input_err_var"])),
                    "" if acc is None else _fmt(acc), row["samples"]])
    return buf.getvalue()


def fig3a_columns(trace: FilterTrace, rho: float, area: float):
    """Input estimates against truth plus the wind speed recovered from AL-RKF."""
    nan = np.full(trace.T, np.nan)

    def d(f):
        return trace.est[f]["d"][:, 0] if f in trace.est else nan

    d_al = d("al_rkf")
    v = wind_force_to_speed(d_al, rho, area) if "al_rkf" in trace.est else nan
    header = ["t", "d_true", "d_kf_implied", "d_rkf", "d_alrkf", "v_wind_est"]
    return header, [trace.t, trace.d_true[:, 0], d("kf"), d("rkf"), d_al, v]


def fig3b_columns(trace: FilterTrace):
    """True and estimated planar positions."""
    i, j = POSITION_INDEX
    header, cols = ["t", "x_true", "y_true"], [trace.t, trace.x_true[:, i], trace.x_true[:, j]]
    for f in trace.filters:
        header += [f"x_{f}", f"y_{f}"]
        cols += [trace.est[f]["x"][:, i], trace.est[f]["x"][:, j]]
    return header, cols


def fig4a_columns(trace: FilterTrace):
    """AMM-KF mode weights, decision and lock flag."""
    header, cols = ["t"], [trace.t]
    for prefix, arr in (("w", trace.amm_w), ("decision", trace.amm_decision), ("d_true", trace.d_true)):
        h, c = _block(prefix, arr)
        header += h
        cols += c
    return header + ["locked"], cols + [trace.amm_locked]


def fig4b_columns(trace: FilterTrace):
    """Position error of every filter over time."""
    i, j = POSITION_INDEX
    header, cols = ["t"], [trace.t]
    for f in trace.filters:
        diff = trace.est[f]["x"][:, [i, j]] - trace.x_true[:, [i, j]]
        header.append(f"pos_err_{f}")
        cols.append(np.sqrt(np.sum(diff * diff, axis=1)))
    return header, cols


def pd_curve(separation: float = 2.0, sigmas=None):
    """Detection probability against innovation standard deviation."""
    sigmas = np.linspace(0.25, 6.0, 24) if sigmas is None else np.asarray(sigmas, dtype=float)
    pd = np.array([detection_probability(0.0, separation, s, s) for s in sigmas])
    return ["sigma", "p_detect"], [sigmas, pd]


def emit(out_dir, traces, stats: StatsTable | None, fmt: str = "json", scenario_config=None,
         prefix: str = "trace") -> list:
    """Write trace CSVs, the stats document and plot data. Returns the written paths."""
    out = Path(out_dir)
    written = []

    def put(name, text):
        atomic_write(out / name, text)
        written.append(out / name)

    for i, tr in enumerate(traces):
        put(f"{prefix}_{i:04d}.csv", trace_to_csv(tr))
    if stats is not None:
        if fmt == "json":
            put("stats.json", stats_to_json(stats))
        else:
            put("stats.csv", stats_to_csv(stats))
            put("table.txt", stats.format_table() if stats.rows else "")
    if traces:
        tr = traces[0]
        if hasattr(scenario_config, "rho"):
            put("fig3a.csv", _table_text(*fig3a_columns(tr, scenario_config.rho, scenario_config.area)))
        if tr.filters:
            put("fig3b.csv", _table_text(*fig3b_columns(tr)))
            put("fig4b.csv", _table_text(*fig4b_columns(tr)))
        if tr.amm_w is not None:
            put("fig4a.csv", _table_text(*fig4a_columns(tr)))
    return written


def write_table(path, header, columns) -> None:
    atomic_write(path, _table_text(header, columns))
