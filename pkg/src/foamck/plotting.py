"""PNG rendering of solve/verify outputs (Agg backend, no global pyplot state)."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.collections import LineCollection
from matplotlib.figure import Figure

from .atomic import write_atomic
from .sets import load_sigma


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _column(header, rows, name, default=np.nan):
    i = header.index(name)
    return np.array([float(r[i]) if r[i] != "" else default for r in rows])


def _save(fig, path):
    FigureCanvasAgg(fig)
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=120, bbox_inches="tight",
                metadata={"Software": None})
    write_atomic(path, buf.getvalue())
    return path


def _grid(header, rows, value):
    """Reshape samples onto the (t, y1) grid; extra axes are sliced at their first value."""
    t = _column(header, rows, "t")
    if "y1" not in header:
        order = np.argsort(t)
        return t[order], None, value[order]
    y = _column(header, rows, "y1")
    keep = np.ones(len(t), dtype=bool)
    for name in header:
        if name.startswith("y") and name != "y1" and name[1:].isdigit():
            v = _column(header, rows, name)
            keep &= v == v[0]
    t, y, value = t[keep], y[keep], value[keep]
    ts, ys = np.unique(t), np.unique(y)
    Z = np.full((len(ys), len(ts)), np.nan)
    Z[np.searchsorted(ys, y), np.searchsorted(ts, t)] = value
    return ts, ys, Z


def _sigma_segments(sigma):
    segs = []
    for p in sigma.all_primitives():
        lo, hi = p.lower, p.upper
        if len(lo) < 2:
            segs.append([(lo[0], 0.0), (hi[0], 0.0)])
            continue
        a, b, c, d = lo[0], hi[0], lo[1], hi[1]
        if p.is_point:
            segs.append([(a, c), (a, c)])
        elif a == b or c == d:
            segs.append([(a, c), (b, d)])
        else:
            segs.append([(a, c), (b, c), (b, d), (a, d), (a, c)])
    return segs


def _field_plot(path, title, header, rows, value, sigma, label, log=False):
    fig = Figure(figsize=(7, 4.5))
    ax = fig.add_subplot()
    if log:
        with np.errstate(divide="ignore"):
            value = np.log10(np.abs(value))
        value[~np.isfinite(value)] = np.nan
    ts, ys, Z = _grid(header, rows, value)
    if ys is None:
        ax.plot(ts, Z, lw=1.2)
        ax.set_xlabel("t")
        ax.set_ylabel(label)
    else:
        finite = Z[np.isfinite(Z)]
        lo, hi = (np.percentile(finite, [1, 99]) if finite.size else (0.0, 1.0))
        mesh = ax.pcolormesh(ts, ys, Z, shading="nearest", vmin=lo, vmax=hi, cmap="viridis")
        fig.colorbar(mesh, ax=ax, label=label)
        ax.set_xlabel("t")
        ax.set_ylabel("y1")
    if sigma is not None and sigma.all_primitives():
        ax.add_collection(LineCollection(_sigma_segments(sigma), colors="crimson",
                                         linewidths=1.0, label="singular set"))
        ax.legend(loc="upper right", fontsize=8)
    ax.set_title(title)
    return _save(fig, path)


def _stabilization_plot(path, table):
    fig = Figure(figsize=(5, 3.5))
    ax = fig.add_subplot()
    mu = np.arange(len(table))
    ax.step(mu, table, where="mid", color="k")
    ax.plot(mu, mu, ls=":", color="grey", label="nu = mu")
    ax.set_xlabel("compact index mu")
    ax.set_ylabel("first stable level")
    ax.legend(fontsize=8)
    ax.set_title("eventual agreement on compacts")
    return _save(fig, path)


def render_run(run):
    """Render the PNGs of a run directory; returns the written paths."""
    run = Path(run)
    report_path, samples_path = run / "report.json", run / "samples.csv"
    for p in (report_path, samples_path):
        if not p.is_file():
            raise FileNotFoundError(f"missing {p.name} in {run}")
    report = json.loads(report_path.read_text(encoding="utf-8"))
    sigma = None
    if (run / "sigma.txt").is_file():
        sigma = load_sigma((run / "sigma.txt").read_text(encoding="utf-8"))
    header, rows = _read_csv(samples_path)
    written = [
        _field_plot(run / "solution.png", "glued solution", header, rows,
                    _column(header, rows, "psi"), sigma, "psi"),
        _stabilization_plot(run / "stabilization.png", report["stabilization"]),
    ]
    oracle = _column(header, rows, "oracle")
    if np.isfinite(oracle).any():
        err = np.abs(_column(header, rows, "psi") - oracle)
        seeded = _column(header, rows, "seeded") > 0
        err[~seeded] = np.nan
        written.append(_field_plot(run / "oracle_error.png", "log10 |psi - oracle| (seeded part)",
                                   header, rows, err, sigma, "log10 error", log=True))
    if (run / "residuals.csv").is_file():
        rh, rr = _read_csv(run / "residuals.csv")
        written.append(_field_plot(run / "residual.png", "log10 |residual|", rh, rr,
                                   _column(rh, rr, "residual"), sigma, "log10 residual",
                                   log=True))
    return written
