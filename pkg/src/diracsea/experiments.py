"""Scripted desk-scale studies over sweeps of lattice specs.

Every study is a pure function of (spec sweep, seed): data files are
byte-identical across reruns, and meta.json carries the resolved inputs
plus wall time.  Output layout: <out>/<study>/<spec-hash>/data.csv.
"""

from dataclasses import dataclass
import hashlib
import itertools
import json
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import RegionTooLarge, TooLarge, ValidationError
from .lattice import LatticeSpec, build_one_particle, signal_speed
from .fock import FockSpace, level_state, sea_state
from .povm import (
    ChargeConfiguration,
    Region,
    born_distribution,
    charge_operator,
    p_nat,
    zero_charge_event,
)
from .dynamics import EvolutionPlan, Evolver, pair_creation_diagnostics

STUDIES = ("vacuum_scan", "charge_fluctuation", "locality", "sea_gallery", "pair_creation")


@dataclass(frozen=True)
class StudySpec:
    """One study run: which study, over which specs, with which randomness."""

    study: str
    sweep: tuple
    n_traj: int = 0
    seed: int = 0
    output_dir: str = "out"

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ValidationError(f"unknown study '{self.study}'; choose from {STUDIES}")
        if not self.sweep:
            raise ValidationError("sweep must be nonempty")
        if len({s.spin_dim for s in self.sweep}) != 1:
            raise ValidationError("all sweep specs must share spin_dim")


def default_vacuum_sweep(spin_dim=2, mass=1.0, spacings=(0.5, 1.0), n_values=(4, 6, 8, 10)):
    """Fixed-spacing slices: L = N a.  (N = 2 is omitted: the symmetric
    difference vanishes on a two-site ring, which makes the sea state
    exactly level and the scan degenerate.)"""
    return tuple(
        LatticeSpec(1, n, n * a, mass, spin_dim) for a in spacings for n in n_values
    )


def _spec_hash(spec: LatticeSpec) -> str:
    blob = json.dumps(spec.to_config(), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _sea_space(spec: LatticeSpec, max_dimension=1 << 20) -> FockSpace:
    if 1 << spec.n_modes > max_dimension:
        raise TooLarge(f"spec {spec.to_config()} exceeds the Fock guard")
    return FockSpace(build_one_particle(spec), max_dimension=max_dimension)


# ---------------------------------------------------------------------------
# vacuum scan
# ---------------------------------------------------------------------------

def vacuum_scan(sweep, max_dimension=1 << 20):
    """Exact sea-state statistics per sweep point.

    Columns: geometry, the empty-configuration weight computed two ways
    (diagonal binning and the projector), expected counts of charged
    sites, electrons, and positrons.  Trend flags summarize the
    fixed-spacing (L growing) and fixed-box (spacing shrinking) slices.
    """
    rows = []
    for spec in sweep:
        space = _sea_space(spec, max_dimension)
        omega = sea_state(space)
        table = born_distribution(omega, "nat")
        vac = ChargeConfiguration.vacuum(spec.sites, spec.spin_dim)
        p_vac = table.weight_of(vac.pattern_id())
        p_vac_proj = p_nat(space, vac).weight(omega)
        e_nonzero = 0.0
        e_nel = 0.0
        e_npos = 0.0
        for cid, w in zip(table.ids, table.weights):
            q = ChargeConfiguration.from_pattern_id(int(cid), spec.sites, spec.spin_dim)
            e_nonzero += w * sum(1 for c in q.charges if c != 0)
            e_nel += w * q.n_el
            e_npos += w * q.n_pos
        rows.append({
            "dim": spec.dim, "n_per_side": spec.n_per_side, "box_length": spec.box_length,
            "spacing": spec.spacing, "mass": spec.mass, "spin_dim": spec.spin_dim,
            "p_vac": p_vac, "p_vac_projector": p_vac_proj,
            "e_nonzero_sites": e_nonzero, "e_n_el": e_nel, "e_n_pos": e_npos,
        })
    flags = _trend_flags(rows)
    return rows, flags


def _trend_flags(rows):
    flags = {}
    def key_a(r):
        return (r["dim"], r["spin_dim"], r["mass"], round(r["spacing"], 12))
    for k, group in itertools.groupby(sorted(rows, key=lambda r: (key_a(r), r["box_length"])), key=key_a):
        pts = list(group)
        if len(pts) >= 2:
            vals = [p["p_vac"] for p in pts]
            flags[f"fixed_spacing_a={k[3]}_p_vac_decreasing"] = all(
                b < a for a, b in zip(vals, vals[1:])
            )
    def key_l(r):
        return (r["dim"], r["spin_dim"], r["mass"], round(r["box_length"], 12))
    for k, group in itertools.groupby(
        sorted(rows, key=lambda r: (key_l(r), -r["spacing"])), key=key_l
    ):
        pts = list(group)
        if len(pts) >= 2:
            flags[f"fixed_box_L={k[3]}_p_vac_by_finer_spacing"] = [p["p_vac"] for p in pts]
    return flags


def write_vacuum_csv(rows, path):
    cols = ["dim", "n_per_side", "box_length", "spacing", "mass", "spin_dim",
            "p_vac", "p_vac_projector", "e_nonzero_sites", "e_n_el", "e_n_pos"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(r[c]) for c in cols) + "\n")


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


# ---------------------------------------------------------------------------
# charge fluctuations in subregions
# ---------------------------------------------------------------------------

def charge_fluctuation(sweep, max_dimension=1 << 20):
    """Sea-state charge moments of contiguous regions of growing size."""
    rows = []
    for spec in sweep:
        space = _sea_space(spec, max_dimension)
        w = np.abs(sea_state(space).amplitudes) ** 2
        for size in range(1, spec.sites // 2 + 1):
            diag = charge_operator(space, Region(range(size))).diagonal
            mean = float(np.sum(w * diag))
            var = float(np.sum(w * diag ** 2)) - mean ** 2
            rows.append({
                "dim": spec.dim, "n_per_side": spec.n_per_side,
                "box_length": spec.box_length, "spacing": spec.spacing,
                "region_size": size, "mean_q": mean, "var_q": var,
                "mean_abs_q": float(np.sum(w * np.abs(diag))),
            })
    return rows


def write_fluctuation_csv(rows, path):
    cols = ["dim", "n_per_side", "box_length", "spacing", "region_size",
            "mean_q", "var_q", "mean_abs_q"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(r[c]) for c in cols) + "\n")


# ---------------------------------------------------------------------------
# locality
# ---------------------------------------------------------------------------

def _wrap_distance(spec, x, y):
    cx, cy = spec.site_coords(x), spec.site_coords(y)
    total = 0
    for a, b in zip(cx, cy):
        d = abs(a - b)
        total += min(d, spec.n_per_side - d)
    return total


def grown_set(spec, region: Region, radius_sites: int) -> Region:
    return Region([
        y for y in range(spec.sites)
        if any(_wrap_distance(spec, x, y) <= radius_sites for x in region.sites)
    ])


def shrunk_set(spec, region: Region, radius_sites: int) -> Region:
    inside = set(region.sites)
    return Region([
        x for x in region.sites
        if all(y in inside for y in range(spec.sites) if _wrap_distance(spec, x, y) <= radius_sites)
    ])


def locality_check(spec: LatticeSpec, region: Region, t: float, seed: int = 0,
                   extra_collars=(0, 1, 2), max_dimension=1 << 20):
    """Charge leakage into the shrunk region, conditioned on an empty collar.

    States supported on charge-zero-in-A are evolved by t; the report
    records, per collar width, the conditional probability of nonzero
    charge inside the shrunk set given no particles in the collar.  The
    lattice signal speed is measured from the dispersion.  Values are
    recorded, not asserted: the lattice has no sharp light cone.
    """
    space = _sea_space(spec, max_dimension)
    region.validate(spec)
    v = signal_speed(spec)
    radius = int(np.ceil(v * t / spec.spacing))
    base_grown = grown_set(spec, region, radius)
    if len(base_grown) >= spec.sites:
        raise RegionTooLarge(
            f"grown set covers the lattice (radius {radius} sites); shrink t or the region"
        )
    sr = shrunk_set(spec, region, radius)
    # a single time application per state: Krylov wins at any size
    method = "sparse-Krylov" if space.dim > (1 << 10) else "auto"
    plan = EvolutionPlan(method=method, dt=max(t, 1e-6), t_max=max(t, 1e-6))
    evolver = Evolver(space, plan)
    cond = zero_charge_event(space, region)
    rng = np.random.default_rng(seed)
    states = []
    for label, amps in [
        ("sea", sea_state(space).amplitudes),
        ("level", level_state(space).amplitudes),
        ("random", rng.normal(size=space.dim) + 1j * rng.normal(size=space.dim)),
    ]:
        proj = np.where(cond.mask, amps, 0.0)
        nrm = np.linalg.norm(proj)
        if nrm > 1e-12:
            states.append((label, proj / nrm))
    full_q = charge_operator(space, Region(range(spec.sites)))
    results = []
    charge_drift = {}
    for label, amps in states:
        q_before = float(np.sum(full_q.diagonal * np.abs(amps) ** 2))
        evolved = evolver.advance(amps, t) if t > 0 else amps.copy()
        w = np.abs(evolved) ** 2
        charge_drift[label] = abs(float(np.sum(full_q.diagonal * w)) - q_before)
        for extra in extra_collars:
            gr = grown_set(spec, region, radius + extra)
            if len(gr) >= spec.sites:
                results.append({"state": label, "collar_extra": int(extra),
                                "leakage": None, "p_collar_empty": None})
                continue
            collar = Region(sorted(set(gr.sites) - set(sr.sites)))
            collar_empty = zero_charge_event(space, collar).mask if len(collar) else np.ones(space.dim, bool)
            if len(sr):
                sr_zero = zero_charge_event(space, sr).mask
            else:
                sr_zero = np.ones(space.dim, bool)
            p_empty = float(np.sum(w[collar_empty]))
            p_leak = float(np.sum(w[collar_empty & ~sr_zero]))
            results.append({
                "state": label,
                "collar_extra": int(extra),
                "p_collar_empty": p_empty,
                "leakage": (p_leak / p_empty) if p_empty > 1e-14 else None,
            })
    return {
        "t": t,
        "signal_speed": v,
        "radius_sites": radius,
        "region": list(region.sites),
        "shrunk": list(sr.sites),
        "grown": list(base_grown.sites),
        "charge_drift": charge_drift,
        "rows": results,
    }


# ---------------------------------------------------------------------------
# sea gallery
# ---------------------------------------------------------------------------

def sea_gallery(spec: LatticeSpec, n_samples: int, seed: int, max_dimension=1 << 20):
    """I.i.d. charge configurations drawn from the sea state's Born table."""
    space = _sea_space(spec, max_dimension)
    table = born_distribution(sea_state(space), "nat")
    cum = np.cumsum(table.weights)
    cum /= cum[-1]
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    picks = np.searchsorted(cum, rng.random(n_samples), side="right")
    samples = [
        ChargeConfiguration.from_pattern_id(int(table.ids[p]), spec.sites, spec.spin_dim)
        for p in picks
    ]
    hist = {}
    for q in samples:
        key = (q.n_el, q.n_pos)
        hist[key] = hist.get(key, 0) + 1
    vac_id = ChargeConfiguration.vacuum(spec.sites, spec.spin_dim).pattern_id()
    return {
        "samples": samples,
        "histogram": hist,
        "p_vac_exact": table.weight_of(vac_id),
        "p_vac_empirical": sum(1 for q in samples if q.pattern_id() == vac_id) / n_samples,
    }


def write_gallery_csv(samples, path):
    sites = len(samples[0].charges)
    with open(path, "w") as fh:
        qcols = ",".join(f"q{x}" for x in range(sites))
        fh.write(f"sample_id,{qcols},n_el,n_pos\n")
        for i, q in enumerate(samples):
            qs = ",".join(str(c) for c in q.charges)
            fh.write(f"{i},{qs},{q.n_el},{q.n_pos}\n")


# ---------------------------------------------------------------------------
# study driver
# ---------------------------------------------------------------------------

def run_study(study: StudySpec, max_dimension=1 << 20):
    """Execute a study and write data.csv + meta.json per sweep point."""
    out_root = Path(study.output_dir) / study.study
    written = []
    t0 = time.time()
    if study.study in ("vacuum_scan", "charge_fluctuation"):
        target = out_root / _sweep_hash(study.sweep)
        target.mkdir(parents=True, exist_ok=True)
        if study.study == "vacuum_scan":
            rows, flags = vacuum_scan(study.sweep, max_dimension)
            write_vacuum_csv(rows, target / "data.csv")
            extra = {"trend_flags": flags}
        else:
            rows = charge_fluctuation(study.sweep, max_dimension)
            write_fluctuation_csv(rows, target / "data.csv")
            extra = {}
        _write_meta(target, study, [s.to_config() for s in study.sweep], t0, extra)
        written.append(target)
        return written
    for spec in study.sweep:
        target = out_root / _spec_hash(spec)
        target.mkdir(parents=True, exist_ok=True)
        if study.study == "sea_gallery":
            n = study.n_traj or 200
            result = sea_gallery(spec, n, study.seed, max_dimension)
            write_gallery_csv(result["samples"], target / "data.csv")
            extra = {
                "p_vac_exact": result["p_vac_exact"],
                "p_vac_empirical": result["p_vac_empirical"],
                "histogram": {f"{k[0]},{k[1]}": v for k, v in result["histogram"].items()},
            }
        elif study.study == "locality":
            size = max(1, spec.sites // 3)
            report = locality_check(spec, Region(range(size)), t=0.5 * spec.spacing,
                                    seed=study.seed, max_dimension=max_dimension)
            with open(target / "data.json", "w") as fh:
                json.dump(report, fh, indent=2, sort_keys=True)
                fh.write("\n")
            extra = {}
        else:  # pair_creation
            space = _sea_space(spec, max_dimension)
            report = pair_creation_diagnostics(space)
            with open(target / "data.json", "w") as fh:
                json.dump(report, fh, indent=2, sort_keys=True)
                fh.write("\n")
            with open(target / "data.csv", "w") as fh:
                fh.write("time,n_el_expectation\n")
                for t, v in zip(report["level_series_times"], report["level_series_n_el"]):
                    fh.write(f"{t:.17g},{v:.17g}\n")
            extra = {}
        _write_meta(target, study, spec.to_config(), t0, extra)
        written.append(target)
    return written


def _sweep_hash(sweep):
    blob = json.dumps([s.to_config() for s in sweep], sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _write_meta(target, study, spec_cfg, t0, extra):
    meta = {
        "study": study.study,
        "spec": spec_cfg,
        "seed": study.seed,
        "n_traj": study.n_traj,
        "code_version": __version__,
        "wall_time_s": round(time.time() - t0, 3),
        "created_unix": time.time(),
    }
    meta.update(extra)
    with open(target / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
