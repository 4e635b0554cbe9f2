"""Command-line front end: ``simulate``, ``rates``, ``analyze`` and ``oracle``.

Configuration is a flat ``key = value`` file with dotted keys (``params.v_nn``,
``run.duration`` ...). Values are layered: built-in defaults, then the preset,
then the config file, then ``--set KEY=VALUE`` and the dedicated flags.
Unknown keys are rejected.

Every output table is tab-separated with a ``#`` header carrying the column
names, units and the config hash. Floats are written in shortest round-trip
form, so identical runs give identical bytes. A ``manifest.json`` lists the
resolved config and the sha256 of each file.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    DEFAULT_PATTERNS,
    align_to_emissions,
    classify_periods,
    dwell_time_histogram,
    estimate_gap_rates,
    estimate_pattern_rates,
    estimate_single_rates,
    joint_occupancy,
    merge_pattern_counts,
)
from .errors import (
    ConfigError,
    EnsembleError,
    InsufficientDataError,
    NumericalError,
    ResourceLimitError,
)
from .master import (
    DegenerateSteadyStateError,
    evolve_master,
    stationary_projection,
    steady_state,
)
from .model import BasisIndex, LatticeSpec, SystemParams, basis_state, E, R
from .presets import get_preset
from .rates import (
    gamma_b_to_d,
    gamma_bb_to_dd_bound,
    gamma_d_to_b,
    gamma_dd_to_bb,
    gamma_short,
    pattern_rate_predictions,
    two_atom_rate_table,
)
from .trajectory import TrajectoryRecord, run_ensemble

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RESOURCE = 3
EXIT_NUMERIC = 4
EXIT_INPUT = 5

_PARAM_KEYS = [f.name for f in fields(SystemParams)]


def _to_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt(kind):
    def parse(text: str):
        return None if text.strip().lower() in ("", "none", "auto") else kind(text)

    return parse


# key -> (parser, default)
SCHEMA: dict[str, tuple] = {
    "preset": (_opt(str), None),
    **{f"params.{f.name}": (float, f.default) for f in fields(SystemParams)},
    "lattice.n_atoms": (int, 1),
    "lattice.boundary": (str, "periodic"),
    "lattice.interaction_exponent": (int, 6),
    "lattice.interaction_cutoff": (_opt(int), None),
    "run.duration": (float, 1000.0),
    "run.dt": (float, 0.05),
    "run.dt_min": (float, 1e-4),
    "run.sample_interval": (float, 1.0),
    "run.n_traj": (int, 1),
    "run.seed": (int, 0),
    "run.initial": (_opt(str), None),
    "run.method": (str, "auto"),
    "run.n_jobs": (int, 1),
    "output.dir": (str, "out"),
    "rates.scan": (str, "none"),
    "rates.start": (float, 0.0),
    "rates.stop": (float, 0.0),
    "rates.step": (float, 0.0),
    "analyze.input": (_opt(str), None),
    "analyze.threshold": (float, 0.98),
    "analyze.align": (_to_bool, False),
    "analyze.patterns": (str, ",".join(DEFAULT_PATTERNS)),
    "analyze.bins": (int, 20),
    "analyze.gap_threshold": (_opt(float), None),
    "analyze.t_min": (float, 0.0),
    "oracle.steady": (_to_bool, True),
    "oracle.compare_traj": (int, 0),
}

# keys that determine the simulated data; everything else may vary freely
_SIM_SECTIONS = ("params.", "lattice.", "run.")
_NOT_HASHED = {"run.n_jobs"}
# not echoed in manifests, so outputs are identical wherever they are written
_NOT_ECHOED = {"run.n_jobs", "output.dir", "analyze.input"}

SCAN_KEYS = ("delta_r", "v_nn", "omega_r", "omega_e", "omega")


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Raw ``key -> value`` strings from config text; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{n}: expected 'key = value'")
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        out[key] = value.strip()
    return out


def resolve_config(raw_layers: list[dict[str, str]]) -> dict:
    """Merge raw layers over the defaults and the named preset, then type-check."""
    merged: dict[str, str] = {}
    for layer in raw_layers:
        for key in layer:
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r}")
        merged.update(layer)
    config = {k: default for k, (_, default) in SCHEMA.items()}
    preset = merged.get("preset")
    if preset is not None and preset.strip().lower() not in ("", "none"):
        for name, value in get_preset(preset.strip()).as_dict().items():
            config[f"params.{name}"] = value
    for key, text in merged.items():
        parser = SCHEMA[key][0]
        try:
            config[key] = parser(text)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
    # validate the physical part up front
    build_params(config)
    build_lattice(config)
    for key in ("run.duration", "run.dt", "run.dt_min", "run.sample_interval"):
        if not config[key] > 0:
            raise ConfigError(f"{key} must be positive")
    if config["run.n_traj"] < 1 or config["run.n_jobs"] < 1:
        raise ConfigError("run.n_traj and run.n_jobs must be at least 1")
    if config["run.method"] not in ("auto", "dense", "krylov"):
        raise ConfigError("run.method must be auto, dense or krylov")
    if config["run.initial"] is not None:
        initial = config["run.initial"]
        if len(initial) != config["lattice.n_atoms"] or set(initial) - set("ger"):
            raise ConfigError("run.initial must be one of g/e/r per atom")
    return config


def build_params(config: dict) -> SystemParams:
    return SystemParams(**{k: config[f"params.{k}"] for k in _PARAM_KEYS})


def build_lattice(config: dict) -> LatticeSpec:
    return LatticeSpec(
        n_atoms=config["lattice.n_atoms"],
        boundary=config["lattice.boundary"],
        interaction_exponent=config["lattice.interaction_exponent"],
        interaction_cutoff=config["lattice.interaction_cutoff"],
    )


def simulation_config(config: dict) -> dict:
    return {
        k: v for k, v in config.items() if k.startswith(_SIM_SECTIONS) and k not in _NOT_HASHED
    }


def config_hash(config: dict) -> str:
    """Hash of the settings that determine simulated data (worker count excluded)."""
    blob = json.dumps(simulation_config(config), sort_keys=True, default=repr)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# text output


def fmt(x) -> str:
    """Shortest round-trip text for numbers; ``str`` otherwise."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_table(path: Path, columns, rows, *, chash: str, units: str, meta: dict | None = None) -> None:
    lines = [f"# config_hash: {chash}", f"# units: {units}"]
    for key, value in (meta or {}).items():
        lines.append(f"# {key}: {fmt(value)}")
    lines.append("# columns: " + "\t".join(columns))
    lines += ["\t".join(fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def read_table(path: Path) -> tuple[dict[str, str], list[str], list[list[str]]]:
    meta, columns, rows = {}, [], []
    for line in path.read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            if key.strip() == "columns":
                columns = value.strip().split("\t")
            else:
                meta[key.strip()] = value.strip()
        elif line:
            rows.append(line.split("\t"))
    return meta, columns, rows


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, config: dict, files: list[str], extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "config_hash": config_hash(config),
        "seed": config["run.seed"],
        "config": {k: config[k] for k in sorted(config) if k not in _NOT_ECHOED},
        "files": {name: _sha256(out / name) for name in sorted(files)},
        **(extra or {}),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=repr) + "\n")


# ---------------------------------------------------------------------------
# commands


def _traj_stem(k: int) -> str:
    return f"traj_{k:04d}"


def cmd_simulate(config: dict) -> list[str]:
    params, lattice = build_params(config), build_lattice(config)
    records = run_ensemble(
        params,
        lattice,
        config["run.duration"],
        config["run.n_traj"],
        seeds=config["run.seed"],
        sample_interval=config["run.sample_interval"],
        n_jobs=config["run.n_jobs"],
        initial=config["run.initial"],
        dt=config["run.dt"],
        dt_min=config["run.dt_min"],
        method=config["run.method"],
    )
    out = Path(config["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(config)
    n = lattice.n_atoms
    written = []
    for rec in records:
        stem = _traj_stem(rec.trajectory_index)
        meta = {"trajectory": rec.trajectory_index}
        pops = np.column_stack([rec.sample_times, rec.populations])
        write_table(
            out / f"{stem}_populations.tsv",
            ["t"] + [f"R_{i}" for i in range(n)],
            pops.tolist(),
            chash=chash,
            units="t in 1/gamma_e; R_i = Rydberg population of atom i",
            meta=meta,
        )
        write_table(
            out / f"{stem}_emissions.tsv",
            ["t", "atom", "channel"],
            zip(rec.emission_times.tolist(), rec.emission_atoms.tolist(), rec.emission_kinds.tolist()),
            chash=chash,
            units="t in 1/gamma_e; channel e (strong transition) or r (Rydberg decay)",
            meta=meta,
        )
        written += [f"{stem}_populations.tsv", f"{stem}_emissions.tsv"]
    write_manifest(out, "simulate", config, written)
    return written


def _scan_grid(config: dict) -> np.ndarray:
    start, stop, step = config["rates.start"], config["rates.stop"], config["rates.step"]
    if step <= 0 or stop < start:
        raise ConfigError("rates scan needs step > 0 and stop >= start")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    if n > 10**6:
        raise ConfigError("rates scan grid too large")
    return start + step * np.arange(n)


def rate_rows(params: SystemParams, scan: str, grid) -> tuple[list[str], list[list]]:
    """One row of analytic rates per scan value."""
    columns = [
        scan, "gamma_d_to_b", "gamma_b_to_d", "gamma_short",
        "BD->BB", "BD->DD", "ratio_BD->DD/BD->BB",
        "DBB->DDB", "DDB->DBB", "DBD->DDD",
        "gamma_dd_to_bb", "gamma_bb_to_dd_bound",
    ]
    rows = []
    for x in grid:
        x = float(x)
        p = params
        if scan == "omega":
            p = params.replace(omega_e=x, omega_r=x)
        elif scan != "none":
            p = params.replace(**{scan: x})
        d, v = p.delta_r, p.v_nn
        table = two_atom_rate_table(d, v, p)
        pat = pattern_rate_predictions(d, v, p)
        if v != 0:
            collective = [gamma_dd_to_bb(p.omega_e, v, p.gamma_e), gamma_bb_to_dd_bound(p.omega_e, v, p.gamma_e)]
        else:
            collective = [float("nan"), float("nan")]
        rows.append(
            [
                x, gamma_d_to_b(d, p), gamma_b_to_d(d, p), gamma_short(p),
                table["BD->BB"], table["BD->DD"], table["BD->DD"] / table["BD->BB"],
                pat["DBB->DDB"], pat["DDB->DBB"], pat["DBD->DDD"],
                *collective,
            ]
        )
    return columns, rows


def cmd_rates(config: dict) -> list[str]:
    params = build_params(config)
    scan = config["rates.scan"]
    if scan not in SCAN_KEYS + ("none",):
        raise ConfigError(f"rates.scan must be one of {SCAN_KEYS + ('none',)}")
    if scan == "none":
        grid = np.array([params.delta_r])
        scan_col = "none"
    else:
        grid = _scan_grid(config)
        scan_col = scan
    columns, rows = rate_rows(params, scan_col, grid)
    if scan == "none":
        columns[0] = "point"
        rows = [[0] + r[1:] for r in rows]
    out = Path(config["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    write_table(
        out / "rates.tsv",
        columns,
        rows,
        chash=config_hash(config),
        units="rates in gamma_e; scan variable in gamma_e",
        meta={"scan": scan},
    )
    write_manifest(out, "rates", config, ["rates.tsv"])
    return ["rates.tsv"]


class InputError(Exception):
    """Analysis input missing, empty or inconsistent with its manifest."""


def load_run(directory: Path) -> tuple[dict, list[TrajectoryRecord]]:
    """Read a ``simulate`` output directory, verifying hashes against its manifest."""
    mpath = directory / "manifest.json"
    if not mpath.is_file():
        raise InputError(f"no manifest.json in {directory}")
    manifest = json.loads(mpath.read_text())
    if manifest.get("command") != "simulate":
        raise InputError("input directory was not produced by 'simulate'")
    files = manifest.get("files", {})
    stems = sorted({name.rsplit("_", 1)[0] for name in files})
    if not stems:
        raise InputError("manifest lists no trajectories")
    for name, digest in files.items():
        path = directory / name
        if not path.is_file() or _sha256(path) != digest:
            raise InputError(f"{name} is missing or does not match the manifest")
    raw = {
        k: str(v) for k, v in manifest["config"].items() if v is not None and k.startswith(_SIM_SECTIONS)
    }
    config = resolve_config([raw])
    if config_hash(config) != manifest["config_hash"]:
        raise InputError("manifest config does not reproduce its config hash")
    params, lattice = build_params(config), build_lattice(config)
    records = []
    for stem in stems:
        pmeta, _, prow = read_table(directory / f"{stem}_populations.tsv")
        emeta, _, erow = read_table(directory / f"{stem}_emissions.tsv")
        for meta in (pmeta, emeta):
            if meta.get("config_hash") != manifest["config_hash"]:
                raise InputError(f"{stem}: config hash differs from the manifest")
        pops = np.array(prow, dtype=np.float64).reshape(-1, lattice.n_atoms + 1)
        if pops.shape[0] == 0:
            raise InputError(f"{stem}: empty population table")
        em_t = np.array([r[0] for r in erow], dtype=np.float64)
        records.append(
            TrajectoryRecord(
                params=params,
                lattice=lattice,
                seed=config["run.seed"],
                trajectory_index=int(pmeta["trajectory"]),
                duration=config["run.duration"],
                initial=config["run.initial"] or "g" * lattice.n_atoms,
                settings={"sample_interval": config["run.sample_interval"], "dt": config["run.dt"]},
                emission_times=em_t,
                emission_atoms=np.array([int(r[1]) for r in erow], dtype=np.int64),
                emission_kinds=np.array([r[2] for r in erow], dtype="<U1"),
                emission_norms=np.full(em_t.size, np.nan),
                emission_thresholds=np.full(em_t.size, np.nan),
                sample_times=pops[:, 0],
                populations=pops[:, 1:],
                sample_norms=np.full(pops.shape[0], np.nan),
            )
        )
    return config, records


def cmd_analyze(config: dict, claimed: dict | None = None) -> list[str]:
    if config["analyze.input"] is None:
        raise ConfigError("analyze needs --input DIR (or analyze.input)")
    sim_config, records = load_run(Path(config["analyze.input"]))
    chash = config_hash(sim_config)
    if claimed is not None and config_hash(claimed) != chash:
        raise InputError("inputs were produced by a different config than the one given")
    lattice = build_lattice(sim_config)
    params = build_params(sim_config)
    segs = [classify_periods(r, config["analyze.threshold"]) for r in records]
    if config["analyze.align"]:
        segs = [align_to_emissions(s, r) for s, r in zip(segs, records)]
    out = Path(config["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def table(name, columns, rows, units, meta=None):
        write_table(out / name, columns, rows, chash=chash, units=units, meta=meta)
        written.append(name)

    table(
        "segmentation.tsv",
        ["trajectory", "atom", "start", "end", "label"],
        [
            (r.trajectory_index, i, s, e, lab)
            for r, seg in zip(records, segs)
            for i, ivs in enumerate(seg.intervals)
            for s, e, lab in ivs
        ],
        "times in 1/gamma_e",
        {"threshold": config["analyze.threshold"], "aligned": config["analyze.align"]},
    )
    try:
        single = estimate_single_rates(segs)
        rows = [
            ("B->D", single.b_to_d, single.b_to_d_err, single.n_b_exits, single.time_b,
             gamma_b_to_d(params.delta_r, params)),
            ("D->B", single.d_to_b, single.d_to_b_err, single.n_d_exits, single.time_d,
             gamma_d_to_b(params.delta_r, params)),
        ]
    except InsufficientDataError:
        rows = []
    table(
        "single_rates.tsv",
        ["transition", "rate", "rate_err", "exits", "time_in_source", "isolated_atom_prediction"],
        rows,
        "rates in gamma_e; times in 1/gamma_e",
    )
    for label in ("B", "D"):
        try:
            hist = dwell_time_histogram(segs, label, bins=config["analyze.bins"])
        except InsufficientDataError:
            continue
        meta = {"n": hist.n}
        if hist.rate is not None:
            meta.update(fit_rate=hist.rate, fit_rate_err=hist.rate_err,
                        chi2_per_dof=hist.chi2_per_dof, poor_fit=hist.poor_fit)
        table(
            f"dwell_{label}.tsv",
            ["bin_lo", "bin_hi", "count"],
            zip(hist.edges[:-1].tolist(), hist.edges[1:].tolist(), hist.counts.tolist()),
            "times in 1/gamma_e",
            meta,
        )
    if lattice.n_atoms >= 3:
        patterns = [p.strip() for p in config["analyze.patterns"].split(",") if p.strip()]
        counts = merge_pattern_counts(estimate_pattern_rates(s, lattice, patterns) for s in segs)
        predicted = pattern_rate_predictions(params.delta_r, params.v_nn, params) if params.omega_e > 0 else {}
        rows = []
        for p in patterns:
            pred = predicted.get(p, float("nan"))
            z = counts.z_score(p, pred) if p in predicted else float("nan")
            rows.append((p, counts.events[p], counts.time_at_risk[p], counts.rate(p), counts.rate_err(p), pred, z))
        table(
            "pattern_rates.tsv",
            ["pattern", "events", "time_at_risk", "rate", "rate_err", "predicted", "z"],
            rows,
            "rates in gamma_e; times in 1/gamma_e",
        )
    if lattice.n_atoms <= 4:
        occ: dict[str, float] = {}
        for s in segs:
            for k, v in joint_occupancy(s, config["analyze.t_min"]).items():
                occ[k] = occ.get(k, 0.0) + v / len(segs)
        table("joint_occupancy.tsv", ["pattern", "fraction"], sorted(occ.items()),
              "fraction of sampled time", {"t_min": config["analyze.t_min"]})
    if config["analyze.gap_threshold"] is not None:
        g = estimate_gap_rates(records, config["analyze.gap_threshold"])
        table(
            "gap_rates.tsv",
            ["quantity", "value", "err"],
            [("long_exit_rate", g.exit_rate, g.exit_rate_err),
             ("long_entry_rate", g.entry_rate, g.entry_rate_err),
             ("n_long", g.n_long, 0)],
            "rates in gamma_e",
            {"gap_threshold": g.threshold},
        )
    analysis_keys = {k: v for k, v in config.items() if k.startswith("analyze.") and k != "analyze.input"}
    write_manifest(out, "analyze", sim_config, written, {"analysis": analysis_keys})
    return written


def cmd_oracle(config: dict) -> list[str]:
    params, lattice = build_params(config), build_lattice(config)
    n = lattice.n_atoms
    psi0 = basis_state(n, config["run.initial"])
    series = evolve_master(psi0, params, lattice, config["run.duration"], config["run.sample_interval"])
    out = Path(config["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(config)
    written = []
    cols = ["t"] + [f"R_{i}" for i in range(n)] + [f"E_{i}" for i in range(n)] + ["trace_drift", "min_eig"]
    rows = np.column_stack(
        [series.times, series.rydberg, series.excited, np.abs(series.trace - 1.0), series.min_eig]
    )
    write_table(out / "oracle_series.tsv", cols, rows.tolist(), chash=chash,
                units="t in 1/gamma_e; populations dimensionless",
                meta={"max_trace_drift": series.trace_drift})
    written.append("oracle_series.tsv")

    if config["oracle.steady"] and n <= 3:
        try:
            rho = steady_state(params, lattice)
            source = "unique"
        except DegenerateSteadyStateError:
            rho = stationary_projection(params, lattice, psi0)
            source = "projected_from_initial"
        diag = np.real(np.diag(rho))
        basis = BasisIndex(n)
        rows = []
        for i in range(n):
            rr = float(diag @ (basis.levels[:, i] == R))
            ee = float(diag @ (basis.levels[:, i] == E))
            rows.append((i, rr, ee, params.gamma_e * ee))
        write_table(out / "steady.tsv", ["atom", "rho_rr", "rho_ee", "emission_rate"], rows,
                    chash=chash, units="populations; emission rate in gamma_e",
                    meta={"source": source, "bright_emission_rate": gamma_short(params)})
        written.append("steady.tsv")

    n_traj = config["oracle.compare_traj"]
    if n_traj > 0:
        records = run_ensemble(
            params, lattice, config["run.duration"], n_traj, seeds=config["run.seed"],
            sample_interval=config["run.sample_interval"], n_jobs=config["run.n_jobs"],
            initial=config["run.initial"], dt=config["run.dt"], dt_min=config["run.dt_min"],
            method=config["run.method"],
        )
        pops = np.stack([r.populations for r in records])
        mean = pops.mean(axis=0)
        sem = pops.std(axis=0, ddof=1) / np.sqrt(n_traj) if n_traj > 1 else np.zeros_like(mean)
        diff = mean - series.rydberg
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(sem > 0, diff / sem, np.where(np.abs(diff) < 1e-12, 0.0, np.inf))
        cols = ["t"] + [f"z_R_{i}" for i in range(n)]
        write_table(out / "compare.tsv", cols, np.column_stack([series.times, z]).tolist(), chash=chash,
                    units="z = (ensemble mean - master) / standard error",
                    meta={"n_traj": n_traj, "max_abs_z": float(np.max(np.abs(z)))})
        written.append("compare.tsv")
    write_manifest(out, "oracle", config, written)
    return written


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rydberg-jumps", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("simulate", "run quantum trajectories and write populations and emission logs"),
        ("rates", "tabulate analytic rates, optionally over a parameter scan"),
        ("analyze", "segment a simulate run and estimate jump statistics"),
        ("oracle", "master-equation reference for small chains"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, help="flat key = value config file")
        p.add_argument("--preset", help="named parameter preset")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--n-jobs", type=int, help="worker processes")
        p.add_argument("--duration", type=float, help="run length in 1/gamma_e")
        p.add_argument("--n-traj", type=int, help="number of trajectories")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
        if name == "analyze":
            p.add_argument("--input", help="directory written by simulate")
    return parser


def _flag_layer(args) -> dict[str, str]:
    layer = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        layer[key.strip()] = value.strip()
    flags = {
        "preset": args.preset,
        "run.seed": args.seed,
        "output.dir": args.out,
        "run.n_jobs": args.n_jobs,
        "run.duration": args.duration,
        "run.n_traj": args.n_traj,
        "analyze.input": getattr(args, "input", None),
    }
    layer.update({k: str(v) for k, v in flags.items() if v is not None})
    return layer


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        file_layer = {}
        if args.config is not None:
            if not args.config.is_file():
                raise ConfigError(f"config file not found: {args.config}")
            file_layer = parse_config_text(args.config.read_text(), str(args.config))
        flag_layer = _flag_layer(args)
        config = resolve_config([file_layer, flag_layer])
        if args.command == "simulate":
            cmd_simulate(config)
        elif args.command == "rates":
            cmd_rates(config)
        elif args.command == "analyze":
            claimed = None
            if args.config is not None or args.preset is not None:
                # a simulation config was given: inputs must match it
                claimed = config
            cmd_analyze(config, claimed)
        else:
            cmd_oracle(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (NumericalError, EnsembleError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, InsufficientDataError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK
