"""CSV export of trajectories, ledgers and method comparisons.

Floats are written with 17 significant digits so that values round-trip
exactly; identical runs produce byte-identical files.
"""

import csv

import numpy as np

from .system import eval_output

__all__ = [
    "format_float",
    "write_table",
    "read_table",
    "trajectory_columns",
    "write_trajectory",
    "write_ledger",
]


def format_float(v):
    return format(float(v), ".17g")


def _cell(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format_float(v)


def write_table(path, columns):
    """Write an ordered mapping ``name -> 1-d array`` as CSV (rows = array entries)."""
    names = list(columns)
    arrays = [np.asarray(columns[k]) for k in names]
    rows = len(arrays[0]) if arrays else 0
    if any(len(a) != rows for a in arrays):
        raise ValueError("all columns must have the same length")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(rows):
            w.writerow([_cell(a[i]) for a in arrays])


def read_table(path):
    """Read a CSV written by :func:`write_table` back into float arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(c) for c in row] for row in reader]
    arr = np.array(data, dtype=float).reshape(-1, len(header))
    return {name: arr[:, i] for i, name in enumerate(header)}


def trajectory_columns(traj, sys, law=None, extra=None):
    """Columns ``step, t, x_1..x_n, H, y_1..y_m, u_1..u_m`` (plus ``extra``).

    For records with stage data ``y`` and ``u`` are the weighted stage
    averages.  Otherwise (the initial row of a run without stored initial
    port values, or splitting records) ``y`` is the collocated output at the
    state and ``u`` follows from ``law`` when given (``nan`` if not).
    """
    states = traj.states
    n, m = sys.state_dim, sys.port_dim
    ys = np.full((len(states), m), np.nan)
    us = np.full((len(states), m), np.nan)

    def fill(i, x, t):
        y = eval_output(sys, x)
        ys[i] = y
        if law is not None:
            us[i] = law(y, np.asarray(sys.gradient(x), dtype=float), t)

    if traj.initial_output is not None and traj.initial_input is not None and m:
        ys[0], us[0] = traj.initial_output, traj.initial_input
    elif m:
        fill(0, states[0], 0.0)
    for i, rec in enumerate(traj.records, start=1):
        if not m:
            continue
        if rec.has_stages:
            ys[i], us[i] = rec.mean_output(), rec.mean_input()
        else:
            fill(i, rec.state, rec.time)

    cols = {"step": np.arange(len(states)), "t": traj.times}
    for j in range(n):
        cols[f"x_{j + 1}"] = states[:, j]
    cols["H"] = traj.energies
    for j in range(m):
        cols[f"y_{j + 1}"] = ys[:, j]
    for j in range(m):
        cols[f"u_{j + 1}"] = us[:, j]
    for k, v in (extra or {}).items():
        cols[k] = np.asarray(v)
    return cols


def write_trajectory(path, traj, sys, law=None, extra=None):
    write_table(path, trajectory_columns(traj, sys, law, extra))


def write_ledger(path, ledger):
    """Columns ``step, t, H, dH, supply, residual, A_ext_cumulative, dissipation``."""
    write_table(path, ledger.columns())
