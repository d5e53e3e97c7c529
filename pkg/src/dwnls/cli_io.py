"""Command-line entry point, configuration, persistence and sweeps.

Configuration is a sectioned INI file whose numeric keys carry their unit
as a suffix (``x_max_len``, ``dt_time``).  Unknown sections or keys are
rejected at load time.  Every run writes its artifacts and then, last, a
``manifest.json`` listing each artifact with its sha256.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DwnlsError, NumericalError, ValidationError

log = logging.getLogger("dwnls")

OUTPUT_ROOT_ENV = "DWNLS_OUTPUT_ROOT"
SUBCOMMANDS = ("spectrum", "hypotheses", "branch", "bifurcate", "linearize", "fdsim", "nlssim", "sweep", "repro")

# ---------------------------------------------------------------------------
# schemas: column name -> unit ("1" for dimensionless, "" for labels)

SCHEMAS: dict[str, list[tuple[str, str]]] = {
    "eigenstates": [("x", "len"), ("potential", "energy"), ("psi0", "len^-1/2"), ("psi1", "len^-1/2")],
    "branch": [("rho0", "1"), ("rho1", "1"), ("omega", "energy"), ("mass", "1"), ("residual", "1")],
    "linearization": [
        ("n", "1"), ("rho1", "1"), ("omega", "energy"), ("dq_domega", "1/energy"), ("mu0", "energy"), ("mu1", "energy"),
        ("lambda", "energy"), ("lambda_direct", "energy"), ("lambda_over_rho1rho0star", "energy"),
        ("mu0_ratio", "1"), ("mu1_ratio_combo", "1"), ("mu1_ratio_consistent", "1"),
    ],
    "linstab_branch": [
        ("rho1", "1"), ("omega", "energy"), ("mu0", "energy"), ("mu1", "energy"), ("lambda", "energy"),
        ("lambda_direct", "energy"), ("lambda_over_rho1rho0star", "energy"), ("kernel_geometric", "1"), ("kernel_generalized", "1"),
    ],
    "portrait": [("traj", ""), ("t", "time"), ("alpha", "1"), ("beta", "1")],
    "equilibria": [("N", "1"), ("alpha", "1"), ("beta", "1"), ("kind", "")],
    "modulation": [("t", "time"), ("omega", "energy"), ("theta", "rad"), ("abs_z", "1"), ("f_norm_loc", "1"), ("interior_mass", "1")],
    "snapshot": [("t", "time"), ("x", "len"), ("re_u", "1"), ("im_u", "1")],
    "convergence": [("h", "len"), ("eigenvalue", "energy"), ("error", "energy")],
    "interaction": [("sigma", "len"), ("L", "len"), ("depth", "1"), ("n", "1"), ("omega0", "energy"), ("omega1", "energy"), ("h4a", "1"), ("mu2_combo", "1")],
    "bifurcation": [("L", "len"), ("gap", "energy"), ("rho0_star", "1"), ("omega_star", "energy"), ("rel_error", "1")],
    "curvature": [
        ("L", "len"), ("omega2", "energy"), ("omega2_pred", "energy"), ("rho02", "1"), ("rho02_pred", "1"),
        ("omega2_rel_err", "1"), ("rho02_rel_err", "1"),
    ],
    "kernel": [
        ("point", ""), ("omega", "energy"), ("rho1", "1"), ("threshold", "energy"), ("geometric", "1"), ("generalized", "1"),
        ("below_continuum", "1"), ("conclusive", "1"), ("parity", ""),
    ],
    "energy_order": [("dt", "time"), ("energy_drift", "energy")],
    "checks": [("criterion", ""), ("name", ""), ("value", "1"), ("target", ""), ("status", ""), ("note", "")],
    "sweep_index": [("cell", ""), ("param", ""), ("value", "1"), ("status", ""), ("detail", "")],
}


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def write_csv(path: str | os.PathLike, rows, schema: str) -> Path:
    """Header ``name[unit]``; floats with 17 significant digits.

    Rows must carry exactly the schema's columns; anything else is a
    producer bug and raises KeyError.
    """
    cols = SCHEMAS[schema]
    names = [c for c, _ in cols]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"{c}[{u}]" if u else c for c, u in cols])
    for r in rows:
        if set(r) != set(names):
            raise KeyError(f"row columns {sorted(r)} do not match schema {schema!r} {names}")
        w.writerow([_fmt(r[c]) for c in names])
    try:
        path.write_text(buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path: str | os.PathLike) -> list[dict]:
    """Inverse of write_csv: numeric cells come back as float, others as str."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        names = [h.split("[", 1)[0] for h in header]
        out = []
        for row in rd:
            rec = {}
            for k, v in zip(names, row):
                try:
                    rec[k] = float(v)
                except ValueError:
                    rec[k] = v
            out.append(rec)
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path: str | os.PathLike, record: dict) -> Path:
    """Sorted keys; Python's float repr already round-trips exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        path.write_text(json.dumps(_jsonable(record), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


# ---------------------------------------------------------------------------
# configuration

_DEFAULTS: dict[str, dict[str, str]] = {
    "grid": {"x_max_len": "30", "n_nodes": "2999"},
    "potential": {"kind": "gaussian_double_well", "sigma_len": "0.5", "separation_len": "3", "depth_energy": "-1"},
    "branch": {"rho1_max_frac": "0.5", "rho1_count": "10", "tol_abs": "1e-12"},
    "fdsim": {"gap_energy": "0.1", "omega1_energy": "0.9", "masses": "0.1,0.2,0.5", "t_final_time": "0", "dt_time": "0", "variant": "unit"},
    "nlssim": {
        "x_max_len": "60", "n_nodes": "2399", "separation_len": "2", "omega_energy": "1.48", "z0_frac": "0.1",
        "t_final_time": "4000", "dt_time": "0.01", "sponge_strength": "1.0", "table_half_width_frac": "0.2",
        "table_nodes": "41", "sample_every_steps": "100", "snapshot_times": "",
    },
    "run": {"seed": "0", "out_dir": ""},
}


@dataclass
class ToolkitConfig:
    x_max: float
    n: int
    potential: dict
    rho1_max_frac: float
    rho1_count: int
    tol: float
    fd_gap: float
    fd_omega1: float
    fd_masses: tuple[float, ...]
    fd_T: float
    fd_dt: float
    fd_variant: str
    nls: dict
    seed: int
    out_dir: str
    source: str = "<defaults>"
    raw: dict = field(default_factory=dict, repr=False)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()


def _num(parser, sec, key, cast=float):
    try:
        return cast(parser[sec][key])
    except ValueError as exc:
        raise ValidationError(f"[{sec}] {key} = {parser[sec][key]!r} is not a valid {cast.__name__}") from exc


def load_config(path: str | None = None, overrides: dict[str, str] | None = None) -> ToolkitConfig:
    """Defaults, then the file at ``path``, then ``section.key=value`` overrides."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser.read_dict(_DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ValidationError(f"config file not found: {p.resolve()}")
        user = configparser.ConfigParser(interpolation=None)
        user.optionxform = str
        try:
            user.read(p)
        except configparser.Error as exc:
            raise ValidationError(f"cannot parse {p}: {exc}") from exc
        _merge(parser, user, str(p))
    for dotted, value in (overrides or {}).items():
        sec, _, key = dotted.partition(".")
        if sec not in _DEFAULTS or key not in _DEFAULTS[sec]:
            raise ValidationError(f"unknown config key {dotted!r}")
        parser[sec][key] = str(value)
    return _build(parser, str(path) if path else "<defaults>")


def _merge(parser, user, where):
    for sec in user.sections():
        if sec not in _DEFAULTS:
            raise ValidationError(f"{where}: unknown section [{sec}]")
        for key, value in user[sec].items():
            if key not in _DEFAULTS[sec]:
                raise ValidationError(f"{where}: unknown key {key!r} in [{sec}]")
            parser[sec][key] = value


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t.strip())


def _build(parser, source) -> ToolkitConfig:
    raw = {s: dict(parser[s]) for s in parser.sections()}
    x_max = _num(parser, "grid", "x_max_len")
    n = _num(parser, "grid", "n_nodes", int)
    if not x_max > 0:
        raise ValidationError("[grid] x_max_len must be positive")
    if n < 16:
        raise ValidationError("[grid] n_nodes must be at least 16")
    kind = parser["potential"]["kind"]
    if kind != "gaussian_double_well":
        raise ValidationError(f"[potential] kind {kind!r} unsupported from config")
    pot = {
        "sigma": _num(parser, "potential", "sigma_len"),
        "L": _num(parser, "potential", "separation_len"),
        "depth": _num(parser, "potential", "depth_energy"),
    }
    if not pot["sigma"] > 0:
        raise ValidationError("[potential] sigma_len must be positive")
    if not pot["depth"] < 0:
        raise ValidationError("[potential] depth_energy must be negative for bound states")
    frac = _num(parser, "branch", "rho1_max_frac")
    count = _num(parser, "branch", "rho1_count", int)
    if not (frac > 0 and count >= 3):
        raise ValidationError("[branch] needs rho1_max_frac > 0 and rho1_count >= 3")
    try:
        masses = _floats(parser["fdsim"]["masses"])
    except ValueError as exc:
        raise ValidationError(f"[fdsim] masses: {exc}") from exc
    if not masses or any(m <= 0 for m in masses):
        raise ValidationError("[fdsim] masses must be a non-empty list of positive numbers")
    variant = parser["fdsim"]["variant"]
    if variant not in ("unit", "projected"):
        raise ValidationError(f"[fdsim] variant must be unit or projected, got {variant!r}")
    gap = _num(parser, "fdsim", "gap_energy")
    if not gap > 0:
        raise ValidationError("[fdsim] gap_energy must be positive")
    nls_sec = parser["nlssim"]
    try:
        snaps = _floats(nls_sec["snapshot_times"])
    except ValueError as exc:
        raise ValidationError(f"[nlssim] snapshot_times: {exc}") from exc
    nls = {
        "sigma": pot["sigma"],
        "depth": pot["depth"],
        "L": _num(parser, "nlssim", "separation_len"),
        "x_max": _num(parser, "nlssim", "x_max_len"),
        "n": _num(parser, "nlssim", "n_nodes", int),
        "omega": _num(parser, "nlssim", "omega_energy"),
        "z0_frac": _num(parser, "nlssim", "z0_frac"),
        "T": _num(parser, "nlssim", "t_final_time"),
        "dt": _num(parser, "nlssim", "dt_time"),
        "sponge": _num(parser, "nlssim", "sponge_strength"),
        "table_half_width_frac": _num(parser, "nlssim", "table_half_width_frac"),
        "table_nodes": _num(parser, "nlssim", "table_nodes", int),
        "sample_every": _num(parser, "nlssim", "sample_every_steps", int),
        "snapshot_times": snaps,
    }
    if not (nls["T"] > 0 and nls["dt"] > 0 and nls["dt"] < nls["T"]):
        raise ValidationError("[nlssim] need 0 < dt_time < t_final_time")
    if nls["sponge"] < 0 or nls["sample_every"] < 1 or nls["table_nodes"] < 5:
        raise ValidationError("[nlssim] sponge_strength >= 0, sample_every_steps >= 1, table_nodes >= 5 required")
    return ToolkitConfig(
        x_max=x_max,
        n=n,
        potential=pot,
        rho1_max_frac=frac,
        rho1_count=count,
        tol=_num(parser, "branch", "tol_abs"),
        fd_gap=gap,
        fd_omega1=_num(parser, "fdsim", "omega1_energy"),
        fd_masses=masses,
        fd_T=_num(parser, "fdsim", "t_final_time"),
        fd_dt=_num(parser, "fdsim", "dt_time"),
        fd_variant=variant,
        nls=nls,
        seed=_num(parser, "run", "seed", int),
        out_dir=parser["run"]["out_dir"],
        source=source,
        raw=raw,
    )


def default_config_text() -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser.read_dict(_DEFAULTS)
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# manifest


@dataclass
class RunManifest:
    command: str
    config_hash: str
    version: str = __version__
    files: list[dict] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    status: str = "ok"

    def add(self, path: Path, root: Path):
        data = path.read_bytes()
        self.files.append({"path": str(path.relative_to(root)), "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})

    def write(self, root: Path) -> Path:
        # written last: its presence marks a complete run
        tmp = root / "manifest.json.tmp"
        write_json(tmp, asdict(self))
        final = root / "manifest.json"
        os.replace(tmp, final)
        return final


class _Run:
    """Collects artifacts of one command run under ``root``."""

    def __init__(self, root: Path, command: str, cfg: ToolkitConfig):
        self.root = root
        root.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(command, cfg.digest())
        self._t0 = time.perf_counter()

    def csv(self, name, rows, schema):
        self.manifest.add(write_csv(self.root / name, rows, schema), self.root)

    def json(self, name, record):
        self.manifest.add(write_json(self.root / name, record), self.root)

    def timed(self, label, fn, *a, **k):
        t = time.perf_counter()
        out = fn(*a, **k)
        self.manifest.timings[label] = time.perf_counter() - t
        return out

    def finish(self):
        self.manifest.timings["total"] = time.perf_counter() - self._t0
        self.manifest.write(self.root)


# ---------------------------------------------------------------------------
# pipeline stages


def _pair(cfg: ToolkitConfig):
    from .spectral import GaussianDoubleWell, build_grid, make_potential, spectral_pair

    g = build_grid(-cfg.x_max, cfg.x_max, cfg.n)
    return spectral_pair(make_potential(GaussianDoubleWell(**cfg.potential), g), g)


def stage_spectrum(run: _Run, cfg: ToolkitConfig):
    sp = run.timed("spectrum", _pair, cfg)
    V = sp.potential.samples
    run.csv("eigenstates.csv", ({"x": x, "potential": v, "psi0": a, "psi1": b} for x, v, a, b in zip(sp.grid.x, V, sp.psi0, sp.psi1)), "eigenstates")
    run.json("spectrum.json", {"omega0": sp.omega0, "omega1": sp.omega1, "gap": sp.gap, "n": sp.grid.n, "x_max": cfg.x_max})
    return sp


def stage_hypotheses(run: _Run, cfg: ToolkitConfig):
    from .hypotheses import h4_report

    sp = _pair(cfg)
    rep = h4_report(sp)
    d = rep.as_dict()
    d.update(omega0=sp.omega0, omega1=sp.omega1, gap=sp.gap, mu1_curvature=rep.mu1_curvature())
    run.json("hypotheses.json", d)
    return rep


def _bifurcation(cfg):
    from .branch import BranchSolver
    from .hypotheses import h4_report

    sp = _pair(cfg)
    s = BranchSolver(sp, tol=cfg.tol)
    return sp, s, s.find_bifurcation(h4_report(sp))


def stage_bifurcate(run: _Run, cfg: ToolkitConfig):
    sp, s, bif = run.timed("bifurcation", _bifurcation, cfg)
    run.json(
        "bifurcation.json",
        {
            "rho0_star": bif.rho0_star,
            "omega_star": bif.omega_star,
            "predicted_rho0_star": bif.predicted_rho0_star,
            "relative_prediction_error": bif.relative_prediction_error,
            "gap": sp.gap,
        },
    )
    return sp, s, bif


def _branch_rows(branch):
    return [{"rho0": b.rho0, "rho1": b.rho1, "omega": b.omega, "mass": b.q, "residual": b.residual} for b in branch]


def stage_branch(run: _Run, cfg: ToolkitConfig):
    sp, s, bif = stage_bifurcate(run, cfg)
    r0 = bif.rho0_star
    sym = run.timed("symmetric", s.symmetric_branch, np.linspace(0.1, 1.0, cfg.rho1_count) * r0)
    run.csv("branch_symmetric.csv", _branch_rows(sym), "branch")
    r1 = np.linspace(0, cfg.rho1_max_frac, cfg.rho1_count + 1)[1:] * r0
    asym = run.timed("asymmetric", s.asymmetric_branch, r1, bif)
    run.csv("branch_asymmetric.csv", _branch_rows(asym), "branch")
    return sp, bif, asym


def stage_linearize(run: _Run, cfg: ToolkitConfig):
    from .linstab import linearize_branch

    sp, bif, asym = stage_branch(run, cfg)
    rows = run.timed("linearize", linearize_branch, asym, sp, bif.rho0_star)
    run.csv("linearization.csv", rows, "linstab_branch")


def stage_fdsim(run: _Run, cfg: ToolkitConfig):
    from .fdsim import FDParams, critical_mass, equilibria, phase_portrait, stability_threshold

    base = FDParams(cfg.fd_omega1 + cfg.fd_gap, cfg.fd_omega1, cfg.fd_masses[0], variant=cfg.fd_variant)
    eq_rows = []
    for N in cfg.fd_masses:
        p = base.with_mass(N)
        rows = run.timed(
            f"portrait_N{N:g}", phase_portrait, p, T=cfg.fd_T if cfg.fd_T > 0 else None, dt=cfg.fd_dt if cfg.fd_dt > 0 else None
        )
        run.csv(f"portrait_N{N:g}.csv", [dict(zip(("traj", "t", "alpha", "beta"), r)) for r in rows], "portrait")
        eq_rows += [{"N": N, "alpha": e.alpha, "beta": e.beta, "kind": e.kind} for e in equilibria(p)]
    run.csv("equilibria.csv", eq_rows, "equilibria")
    run.json("fdsim.json", {"critical_mass_formula": critical_mass(base), "stability_threshold": stability_threshold(base), "variant": cfg.fd_variant})


def stage_nlssim(run: _Run, cfg: ToolkitConfig):
    from .nlssim import initial_data, relaxation_experiment
    from .repro import RELAXATION_DEFAULTS_VERSION, ground_state_table

    nls = cfg.nls
    sp, _, centre, table = run.timed("table", ground_state_table, nls)
    z0 = nls["z0_frac"] * math.sqrt(float(np.dot(sp.grid.weights, centre.phi**2)))
    snaps = []
    if nls["snapshot_times"]:
        from .nlssim import evolve

        want = sorted(nls["snapshot_times"])
        u0 = initial_data(table, nls["omega"], z0)
        for tt in want:
            _, us, _ = evolve(u0, sp, tt, nls["dt"], sponge=nls["sponge"], sample_every=10**9)
            snaps += [{"t": tt, "x": x, "re_u": u.real, "im_u": u.imag} for x, u in zip(sp.grid.x, us[-1])]
    series, rep = run.timed(
        "evolve", relaxation_experiment, table, nls["omega"], z0, nls["T"], nls["dt"], sponge=nls["sponge"], sample_every=nls["sample_every"]
    )
    run.csv("modulation.csv", series.rows(), "modulation")
    if snaps:
        run.csv("snapshots.csv", snaps, "snapshot")
    d = rep.as_dict()
    d["defaults_version"] = RELAXATION_DEFAULTS_VERSION
    run.json("report.json", d)
    return rep


def stage_repro(run: _Run, cfg: ToolkitConfig, profile: str, only=None):
    from .repro import run_suite

    checks, tables = run.timed("suite", run_suite, profile, only)
    for name, (schema, rows) in sorted(tables.items()):
        run.csv(f"{name}.csv", rows, schema)
    recs = [
        {"criterion": c.criterion, "name": c.name, "value": c.value, "target": c.target, "status": "PASS" if c.passed else "FAIL", "note": c.note}
        for c in checks
    ]
    run.csv("criteria.csv", recs, "checks")
    return checks


STAGES = {
    "spectrum": stage_spectrum,
    "hypotheses": stage_hypotheses,
    "bifurcate": stage_bifurcate,
    "branch": stage_branch,
    "linearize": stage_linearize,
    "fdsim": stage_fdsim,
    "nlssim": stage_nlssim,
}

# short sweep names for common keys
SWEEP_ALIASES = {"L": "potential.separation_len", "sigma": "potential.sigma_len", "depth": "potential.depth_energy", "n": "grid.n_nodes"}


def parse_range(spec: str) -> tuple[str, list[float]]:
    """``key=lo:step:hi`` (inclusive) or ``key=v1,v2,...``."""
    key, sep, rng = spec.partition("=")
    if not sep or not key:
        raise ValidationError(f"--param must look like key=lo:step:hi, got {spec!r}")
    key = SWEEP_ALIASES.get(key, key)
    try:
        if ":" in rng:
            lo, step, hi = (float(t) for t in rng.split(":"))
            if not step > 0 or hi < lo:
                raise ValidationError(f"bad range {rng!r}")
            count = int(math.floor((hi - lo) / step + 1e-9)) + 1
            values = [lo + k * step for k in range(count)]
        else:
            values = [float(t) for t in rng.split(",")]
    except ValueError as exc:
        raise ValidationError(f"bad sweep values {rng!r}: {exc}") from exc
    return key, values


def _sweep_cell(args):
    stage, config_path, overrides, key, value, root = args
    cell = f"{key.split('.')[-1]}={value:g}"
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            cfg = load_config(config_path, {**overrides, key: repr(value)})
            run = _Run(Path(root) / cell, stage, cfg)
            STAGES[stage](run, cfg)
            run.finish()
        return {"cell": cell, "param": key, "value": value, "status": "ok", "detail": ""}
    except DwnlsError as exc:
        return {"cell": cell, "param": key, "value": value, "status": "failed", "detail": f"{type(exc).__name__}: {exc}"}


# ---------------------------------------------------------------------------
# argv


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dwnls", description="Double-well quintic NLS toolkit")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI config file")
        p.add_argument("--out", help=f"output directory (default: ${OUTPUT_ROOT_ENV}/<command> or ./dwnls_out/<command>)")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override one config key")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "sweep":
            p.add_argument("--param", required=True, help="key=lo:step:hi, e.g. L=2:0.5:5")
            p.add_argument("--stage", default="bifurcate", choices=sorted(STAGES))
            p.add_argument("--workers", type=int, default=1)
        if name == "repro":
            p.add_argument("--profile", default="quick", choices=("quick", "full"))
            p.add_argument("--criteria", help="comma-separated subset, e.g. 1,2,9")
    return ap


def _overrides(items) -> dict[str, str]:
    out = {}
    for it in items:
        k, sep, v = it.partition("=")
        if not sep:
            raise ValidationError(f"--set expects SECTION.KEY=VALUE, got {it!r}")
        out[k.strip()] = v.strip()
    return out


def _out_root(args, cfg) -> Path:
    if args.out:
        return Path(args.out)
    if cfg.out_dir:
        return Path(cfg.out_dir)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "dwnls_out")) / args.command


def print_table(checks, stream=None):
    stream = stream or sys.stdout
    width = max(len(c.name) for c in checks) if checks else 10
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        stream.write(f"{status}  C{c.criterion:<3d} {c.name:<{width}}  value={_fmt(c.value)}  target: {c.target}" + (f"  ({c.note})" if c.note else "") + "\n")
    n_ok = sum(c.passed for c in checks)
    stream.write(f"{n_ok}/{len(checks)} checks passed\n")


def run(argv=None) -> int:
    """Exit codes: 0 success, 1 validation or failed checks, 2 numerical failure."""
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args.set))
        root = _out_root(args, cfg)
        if args.command == "sweep":
            return _run_sweep(args, cfg, root)
        run_ = _Run(root, args.command, cfg)
        if args.command == "repro":
            only = {int(t) for t in args.criteria.split(",")} if args.criteria else None
            checks = stage_repro(run_, cfg, args.profile, only)
            run_.finish()
            print_table(checks)
            return 0 if all(c.passed for c in checks) else 1
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore", RuntimeWarning)
            STAGES[args.command](run_, cfg)
        run_.finish()
        print(f"wrote {root}")
        return 0
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 2


def _run_sweep(args, cfg, root: Path) -> int:
    key, values = parse_range(args.param)
    overrides = _overrides(args.set)
    load_config(args.config, {**overrides, key: repr(values[0])})  # validate the key up front
    jobs = [(args.stage, args.config, overrides, key, v, str(root)) for v in values]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as ex:
            cells = list(ex.map(_sweep_cell, jobs))
    else:
        cells = [_sweep_cell(j) for j in jobs]
    run_ = _Run(root, "sweep", cfg)
    run_.csv("index.csv", cells, "sweep_index")
    run_.finish()
    for c in cells:
        print(f"{c['status']:<7s} {c['cell']}  {c['detail']}")
    return 0 if all(c["status"] == "ok" for c in cells) else 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
