"""Command-line entry point.

Subcommands: spectrum, sea, born, evolve, bell, study, selftest.  Flags
override config-file keys; every run writes meta.json with the resolved
configuration.  Exit codes: 0 success, 1 validation/usage error, 2
numerical-tolerance failure.  Data files are byte-identical across reruns
with identical flags; only meta.json carries timestamps.
"""

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    DiracSeaError,
    EmptyInput,
    SchemaMismatch,
    TooLarge,
    ValidationError,
)
from .lattice import LatticeSpec, build_one_particle, eigen_csv_rows
from .fock import (
    FockSpace,
    bottom_state,
    level_state,
    save_state_binary,
    sea_state,
    wave_packet_state,
)
from .povm import (
    ChargeConfiguration,
    Region,
    born_distribution,
    charge_operator,
    number_operators,
    p_nat,
    p_obv,
)
from .dynamics import (
    EvolutionPlan,
    Evolver,
    equivariance_check,
    hamiltonian,
    sample_process,
    trajectories_to_csv,
)
from .experiments import STUDIES, StudySpec, default_vacuum_sweep, run_study
from . import selftest as selftest_mod

DEFAULT_GUARD = 1 << 20


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _common_flags(p):
    p.add_argument("--dim", type=int, help="spatial dimension (1, 2, or 3)")
    p.add_argument("--n", type=int, help="sites per side")
    p.add_argument("--spin", type=int, help="spinor components (2 or 4)")
    p.add_argument("--mass", type=float, help="fermion mass")
    p.add_argument("--len", dest="box_length", type=float, help="box side length")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output directory (default $DIRACSEA_OUT or ./out)")
    p.add_argument("--format", choices=("csv", "json"), help="table format (default csv)")
    p.add_argument("--workers", type=int, help="worker count (default all cores)")
    p.add_argument("--allow-large", action="store_true", default=None,
                   help="lift the 2^20 Fock dimension guard")
    p.add_argument("--config", help="flat key=value config file; flags override")


_DEFAULTS = {
    "dim": 1, "n": 4, "spin": 2, "mass": 1.0, "box_length": None,
    "seed": 0, "out": None, "format": "csv", "workers": 0, "allow_large": False,
}


def _read_config_file(path):
    cfg = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}") from exc
    for line_no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{line_no}: expected key = value")
        key, val = (part.strip() for part in line.split("=", 1))
        cfg[key.replace("-", "_")] = val
    return cfg


def _resolve(args):
    """defaults < config file < explicit flags."""
    resolved = dict(_DEFAULTS)
    if args.config:
        file_cfg = _read_config_file(args.config)
        rename = {"len": "box_length"}
        casts = {"dim": int, "n": int, "spin": int, "mass": float, "box_length": float,
                 "seed": int, "workers": int, "allow_large": lambda s: s.lower() in ("1", "true", "yes")}
        for key, val in file_cfg.items():
            key = rename.get(key, key)
            if key not in resolved:
                raise ValidationError(f"unknown config key '{key}'")
            resolved[key] = casts.get(key, str)(val)
    for key in _DEFAULTS:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            resolved[key] = flag_val
    if resolved["box_length"] is None:
        resolved["box_length"] = float(resolved["n"])
    if resolved["out"] is None:
        resolved["out"] = os.environ.get("DIRACSEA_OUT", "out")
    if resolved["workers"] == 0:
        resolved["workers"] = os.cpu_count() or 1
    return resolved


def _spec_of(cfg):
    return LatticeSpec(dim=cfg["dim"], n_per_side=cfg["n"], box_length=cfg["box_length"],
                       mass=cfg["mass"], spin_dim=cfg["spin"])


def _space_of(cfg):
    spec = _spec_of(cfg)
    guard = (1 << 34) if cfg["allow_large"] else DEFAULT_GUARD
    if (1 << spec.n_modes) > guard:
        raise TooLarge(
            f"Fock dimension 2^{spec.n_modes} exceeds the guard; pass --allow-large to proceed"
        )
    return FockSpace(build_one_particle(spec), max_dimension=guard)


def _outdir(cfg, sub):
    path = Path(cfg["out"]) / sub
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_meta(path, cfg, sub, outputs, args=None):
    config = dict(cfg)
    if args is not None:
        skip = set(_DEFAULTS) | {"func", "config", "subcommand", "allow_large"}
        config.update({
            k: v for k, v in vars(args).items() if k not in skip and v is not None
        })
    meta = {
        "subcommand": sub,
        "config": config,
        "code_version": __version__,
        "created_unix": time.time(),
        "outputs": [str(o) for o in outputs],
    }
    with open(path / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _named_state(space, cfg, name):
    if name == "sea":
        return sea_state(space)
    if name == "bottom":
        return bottom_state(space)
    if name == "level":
        return level_state(space)
    if name == "packet":
        return wave_packet_state(space, width=cfg.get("packet_width", 1.0),
                                 momentum=cfg.get("packet_momentum", 1.5))
    raise ValidationError(f"unknown state '{name}'")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_spectrum(cfg, args):
    sysm = build_one_particle(_spec_of(cfg))
    out = _outdir(cfg, "spectrum")
    target = out / "spectrum.csv"
    with open(target, "w") as fh:
        fh.write("index,energy,momentum_index,spin_branch\n")
        for i, e, m, b in eigen_csv_rows(sysm):
            fh.write(f"{i},{e:.17g},{m},{b}\n")
    _write_meta(out, cfg, "spectrum", [target], args)
    print(f"wrote {target} ({len(sysm.eigenvalues)} modes, "
          f"gap {np.min(np.abs(sysm.eigenvalues)):.6g}, conjugation {sysm.conjugation_name})")
    return 0


def _cmd_sea(cfg, args):
    space = _space_of(cfg)
    omega = sea_state(space)
    ham = hamiltonian(space)
    out = _outdir(cfg, "sea")
    occ_path = out / "occupancy.csv"
    w = np.abs(omega.amplitudes) ** 2
    with open(occ_path, "w") as fh:
        fh.write("site,mean_occupation\n")
        for x in range(space.spec.sites):
            fh.write(f"{x},{float(np.sum(space.occupations[x] * w)):.17g}\n")
    vac = ChargeConfiguration.vacuum(space.spec.sites, space.spec.spin_dim)
    empty = (0,) * space.spec.sites
    report = {
        "norm": omega.norm(),
        "energy": float(np.real(ham.expectation(omega))),
        "p_vac_nat": p_nat(space, vac).weight(omega),
        "p_vac_obv": p_obv(space, empty, empty).weight(omega),
    }
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if args.state_out:
        save_state_binary(omega, args.state_out)
    _write_meta(out, cfg, "sea", [occ_path, out / "report.json"], args)
    print(f"sea state: energy {report['energy']:.3e}, "
          f"p_vac(nat) {report['p_vac_nat']:.6f}, p_vac(obv) {report['p_vac_obv']:.6f}")
    return 0


def _cmd_born(cfg, args):
    space = _space_of(cfg)
    psi = _named_state(space, cfg, args.state)
    table = born_distribution(psi, args.measure)
    out = _outdir(cfg, "born")
    if cfg["format"] == "json":
        target = out / "born.json"
        data = [
            {"config_id": cid, "charges": charges, "n_el": nel, "n_pos": npos,
             "total_charge": tot, "weight": wgt}
            for cid, charges, nel, npos, tot, wgt in table.rows()
        ]
        with open(target, "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        target = out / "born.csv"
        table.write_csv(target)
    _write_meta(out, cfg, "born", [target], args)
    print(f"wrote {target} ({len(table.ids)} configurations, "
          f"sum {table.total():.12f}, dropped {table.dropped:.3e})")
    return 0


def _cmd_evolve(cfg, args):
    space = _space_of(cfg)
    psi = _named_state(space, cfg, args.state)
    plan = EvolutionPlan(method=args.method, dt=args.dt, t_max=args.t_max)
    evolver = Evolver(space, plan)
    times, states = evolver.grid_states(psi.amplitudes)
    full = Region(range(space.spec.sites))
    q_diag = charge_operator(space, full).diagonal
    nel, npos = number_operators(space, full)
    ham = hamiltonian(space)
    out = _outdir(cfg, "evolve")
    target = out / "timeseries.csv"
    with open(target, "w") as fh:
        fh.write("time,norm,energy,q_total,n_el,n_pos\n")
        for t, amps in zip(times, states):
            w = np.abs(amps) ** 2
            energy = float(np.real(np.vdot(amps, ham.matvec(amps))))
            fh.write(
                f"{t:.17g},{np.linalg.norm(amps):.17g},{energy:.17g},"
                f"{float(np.sum(q_diag * w)):.17g},"
                f"{float(np.sum(nel.diagonal * w)):.17g},"
                f"{float(np.sum(npos.diagonal * w)):.17g}\n"
            )
    _write_meta(out, cfg, "evolve", [target], args)
    print(f"wrote {target} ({len(times)} grid times)")
    return 0


def _cmd_bell(cfg, args):
    space = _space_of(cfg)
    psi = _named_state(space, cfg, args.state)
    plan = EvolutionPlan(method=args.method, dt=args.dt, t_max=args.t_max)
    out = _outdir(cfg, "bell")
    outputs = []
    if args.equivariance:
        times = [float(t) for t in args.equivariance.split(",")]
        records, trajectories = equivariance_check(
            psi, plan, args.traj, times, seed=cfg["seed"], workers=cfg["workers"]
        )
        eq_path = out / "equivariance.csv"
        with open(eq_path, "w") as fh:
            fh.write("time,tv,bootstrap_radius,n_traj,support\n")
            for rec in records:
                fh.write(f"{rec['time']:.17g},{rec['tv']:.17g},"
                         f"{rec['bootstrap_radius']:.17g},{rec['n_traj']},{rec['support']}\n")
        outputs.append(eq_path)
    else:
        trajectories = sample_process(psi, plan, args.traj, cfg["seed"], workers=cfg["workers"])
    target = out / "trajectories.csv"
    trajectories_to_csv(trajectories, target)
    outputs.append(target)
    jumps = sum(t.n_jumps for t in trajectories)
    _write_meta(out, cfg, "bell", outputs, args)
    print(f"wrote {target} ({args.traj} trajectories, {jumps} jump events)")
    return 0


def _cmd_study(cfg, args):
    if args.sweep_n:
        ns = [int(s) for s in args.sweep_n.split(",")]
        spacings = [float(s) for s in (args.sweep_spacing or "1.0").split(",")]
        sweep = tuple(
            LatticeSpec(cfg["dim"], n, n * a, cfg["mass"], cfg["spin"])
            for a in spacings for n in ns
        )
    elif args.study in ("vacuum_scan", "charge_fluctuation"):
        sweep = default_vacuum_sweep(spin_dim=cfg["spin"], mass=cfg["mass"])
    else:
        sweep = (_spec_of(cfg),)
    study = StudySpec(study=args.study, sweep=sweep, n_traj=args.traj or 0,
                      seed=cfg["seed"], output_dir=cfg["out"])
    guard = (1 << 34) if cfg["allow_large"] else DEFAULT_GUARD
    written = run_study(study, max_dimension=guard)
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_selftest(cfg, args):
    results = selftest_mod.run_all(_spec_of(cfg), seed=cfg["seed"])
    failed = 0
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failed += 0 if ok else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 2


# ---------------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="diracsea", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="subcommand", required=True)

    p = subs.add_parser("spectrum", help="one-particle eigenvalues with momentum labels")
    _common_flags(p)
    p.set_defaults(func=_cmd_spectrum)

    p = subs.add_parser("sea", help="sea-state construction and occupancy report")
    _common_flags(p)
    p.add_argument("--state-out", help="also write the state as binary")
    p.set_defaults(func=_cmd_sea)

    p = subs.add_parser("born", help="Born table of a named state")
    _common_flags(p)
    p.add_argument("--state", default="sea", choices=("sea", "bottom", "level", "packet"))
    p.add_argument("--measure", default="nat", choices=("nat", "pre", "obv"))
    p.set_defaults(func=_cmd_born)

    p = subs.add_parser("evolve", help="evolve a named state; observable time series")
    _common_flags(p)
    p.add_argument("--state", default="packet", choices=("sea", "bottom", "level", "packet"))
    p.add_argument("--t-max", type=float, default=2.0)
    p.add_argument("--dt", type=float, default=0.05)
    p.add_argument("--method", default="auto")
    p.set_defaults(func=_cmd_evolve)

    p = subs.add_parser("bell", help="sample jump-process trajectories")
    _common_flags(p)
    p.add_argument("--state", default="sea", choices=("sea", "bottom", "level", "packet"))
    p.add_argument("--t-max", type=float, default=2.0)
    p.add_argument("--dt", type=float, default=0.02)
    p.add_argument("--traj", type=int, default=100)
    p.add_argument("--method", default="auto")
    p.add_argument("--equivariance",
                   help="comma list of probe times; also writes equivariance.csv")
    p.set_defaults(func=_cmd_bell)

    p = subs.add_parser("study", help="run a scripted study over a sweep")
    _common_flags(p)
    p.add_argument("--study", required=True, choices=STUDIES)
    p.add_argument("--sweep-n", help="comma list of N values (default: the standard sweep)")
    p.add_argument("--sweep-spacing", help="comma list of lattice spacings")
    p.add_argument("--traj", type=int, help="samples/trajectories per point")
    p.set_defaults(func=_cmd_study)

    p = subs.add_parser("selftest", help="run the invariant battery")
    _common_flags(p)
    p.set_defaults(func=_cmd_selftest)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args)
        return args.func(cfg, args)
    except (ValidationError, TooLarge, SchemaMismatch, EmptyInput) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DiracSeaError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
