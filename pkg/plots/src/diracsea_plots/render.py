"""Figure renderers for the four documented CSV kinds.

Electrons are drawn in blue and positrons in red throughout.  Rendering
is deterministic: identical inputs produce byte-identical image files
(fixed hash salt for SVG ids, no date metadata).
"""

from dataclasses import dataclass
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.collections import LineCollection

from .errors import PlotError, SchemaMismatch
from .io import charge_columns, read_rows

KINDS = ("gallery", "scan", "trajectories", "convergence")

matplotlib.rcParams["svg.hashsalt"] = "diracsea-plots"


@dataclass(frozen=True)
class FigureJob:
    """One rendering task: inputs, kind, output image, style options."""

    kind: str
    inputs: tuple
    output: str
    dpi: int = 150
    max_items: int = 16
    electron_color: str = "#1f4fd8"
    positron_color: str = "#d62728"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PlotError(f"unknown figure kind '{self.kind}'; choose from {KINDS}")
        if not self.inputs:
            raise PlotError("at least one input CSV required")
        suffix = Path(self.output).suffix.lower()
        if suffix not in (".png", ".svg"):
            raise PlotError(f"output must be .png or .svg, got '{suffix}'")


def render(job: FigureJob) -> dict:
    """Render the job; returns figure metadata (counts of what was drawn)."""
    renderer = {
        "gallery": _render_gallery,
        "scan": _render_scan,
        "trajectories": _render_trajectories,
        "convergence": _render_convergence,
    }[job.kind]
    fig, meta = renderer(job)
    _save(fig, job)
    plt.close(fig)
    return meta


def _save(fig, job):
    fig.savefig(job.output, dpi=job.dpi, metadata=_clean_metadata(job.output))


def _clean_metadata(output):
    if Path(output).suffix.lower() == ".svg":
        return {"Date": None}
    return {"Software": "diracsea-plots"}


def _panel_grid(n_panels):
    cols = min(4, max(1, n_panels))
    rows = (n_panels + cols - 1) // cols
    return rows, cols


# ---------------------------------------------------------------------------
# gallery: sampled charge configurations (sample_id, q0.., n_el, n_pos)
# ---------------------------------------------------------------------------

def _render_gallery(job):
    rows, header = read_rows(job.inputs[0], ["sample_id", "n_el", "n_pos"])
    qcols = charge_columns(header)
    if not qcols:
        raise SchemaMismatch(f"{job.inputs[0]}: no site-charge columns q0..qN")
    rows = rows[: job.max_items]
    n_rows, n_cols = _panel_grid(len(rows))
    fig, axes = plt.subplots(n_rows, n_cols, figsize=(2.2 * n_cols, 1.6 * n_rows),
                             squeeze=False)
    electrons = positrons = 0
    for k, row in enumerate(rows):
        ax = axes[k // n_cols][k % n_cols]
        charges = [int(row[c]) for c in qcols]
        sites = range(len(charges))
        ax.hlines(0.0, -0.5, len(charges) - 0.5, color="gray", lw=0.8)
        for x in sites:
            ax.vlines(x, -0.05, 0.0, color="gray", lw=0.8)
        for x, q in zip(sites, charges):
            color = job.electron_color if q < 0 else job.positron_color
            for level in range(abs(q)):
                ax.plot([x], [0.18 + 0.22 * level], "o", color=color, ms=5)
            if q < 0:
                electrons += abs(q)
            elif q > 0:
                positrons += q
        ax.set_xlim(-0.5, len(charges) - 0.5)
        ax.set_ylim(-0.15, 1.0)
        ax.set_title(f"sample {row['sample_id']}", fontsize=7)
        ax.set_xticks([])
        ax.set_yticks([])
    for k in range(len(rows), n_rows * n_cols):
        axes[k // n_cols][k % n_cols].axis("off")
    fig.tight_layout()
    return fig, {"panels": len(rows), "electron_markers": electrons,
                 "positron_markers": positrons}


# ---------------------------------------------------------------------------
# scan: vacuum probability over the sweep
# ---------------------------------------------------------------------------

def _render_scan(job):
    rows, _ = read_rows(job.inputs[0], ["box_length", "spacing", "p_vac"])
    groups = {}
    for row in rows:
        groups.setdefault(row["spacing"], []).append(
            (float(row["box_length"]), float(row["p_vac"]))
        )
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for spacing in sorted(groups, key=float):
        pts = sorted(groups[spacing])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-",
                label=f"spacing {spacing}")
    ax.set_xlabel("box length")
    ax.set_ylabel("empty-configuration probability")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig, {"points": len(rows), "curves": len(groups)}


# ---------------------------------------------------------------------------
# trajectories: space-time diagram, time upward, jumps break the lines
# ---------------------------------------------------------------------------

def _render_trajectories(job):
    rows, header = read_rows(job.inputs[0], ["traj_id", "event_index", "time"])
    qcols = charge_columns(header)
    if not qcols:
        raise SchemaMismatch(f"{job.inputs[0]}: no site-charge columns q0..qN")
    t_end = _final_time(job.inputs[0], rows)
    by_traj = {}
    for row in rows:
        by_traj.setdefault(int(row["traj_id"]), []).append(row)
    traj_ids = sorted(by_traj)[: job.max_items]
    n_rows, n_cols = _panel_grid(len(traj_ids))
    fig, axes = plt.subplots(n_rows, n_cols, figsize=(2.4 * n_cols, 2.4 * n_rows),
                             squeeze=False)
    jump_events = 0
    segments = 0
    for k, tid in enumerate(traj_ids):
        ax = axes[k // n_cols][k % n_cols]
        events = sorted(by_traj[tid], key=lambda r: int(r["event_index"]))
        jump_events += len(events) - 1
        el_segs, pos_segs = [], []
        for i, event in enumerate(events):
            t0 = float(event["time"])
            t1 = float(events[i + 1]["time"]) if i + 1 < len(events) else t_end
            if t1 <= t0:
                continue
            for x, col in enumerate(qcols):
                q = int(event[col])
                if q < 0:
                    el_segs.append([(x, t0), (x, t1)])
                elif q > 0:
                    pos_segs.append([(x, t0), (x, t1)])
        segments += len(el_segs) + len(pos_segs)
        ax.add_collection(LineCollection(el_segs, colors=job.electron_color, lw=2.0))
        ax.add_collection(LineCollection(pos_segs, colors=job.positron_color, lw=2.0))
        ax.set_xlim(-0.5, len(qcols) - 0.5)
        ax.set_ylim(0, t_end if t_end > 0 else 1.0)
        ax.set_title(f"trajectory {tid}", fontsize=7)
        ax.set_xlabel("site", fontsize=7)
        if k % n_cols == 0:
            ax.set_ylabel("time", fontsize=7)
        ax.tick_params(labelsize=6)
    for k in range(len(traj_ids), n_rows * n_cols):
        axes[k // n_cols][k % n_cols].axis("off")
    fig.tight_layout()
    return fig, {"trajectories": len(traj_ids), "jump_events": jump_events,
                 "segments": segments}


def _final_time(csv_path, rows):
    meta_path = Path(csv_path).parent / "meta.json"
    if meta_path.exists():
        try:
            cfg = json.loads(meta_path.read_text()).get("config", {})
            if "t_max" in cfg:
                return float(cfg["t_max"])
        except (json.JSONDecodeError, TypeError, ValueError):
            pass
    latest = max(float(r["time"]) for r in rows)
    return latest if latest > 0 else 1.0


# ---------------------------------------------------------------------------
# convergence: total-variation curves from equivariance runs
# ---------------------------------------------------------------------------

def _render_convergence(job):
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    curves = 0
    points = 0
    for path in job.inputs:
        rows, _ = read_rows(path, ["time", "tv", "bootstrap_radius", "n_traj"])
        times = [float(r["time"]) for r in rows]
        tvs = [float(r["tv"]) for r in rows]
        radii = [float(r["bootstrap_radius"]) for r in rows]
        ax.errorbar(times, tvs, yerr=radii, fmt="o-", capsize=3,
                    label=f"{rows[0]['n_traj']} trajectories")
        curves += 1
        points += len(rows)
    ax.set_xlabel("time")
    ax.set_ylabel("total-variation distance")
    ax.set_ylim(bottom=0)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig, {"curves": curves, "points": points}
