"""Experiment orchestration: plan files, sweep execution, and emission.

A plan file is INI-style text with the sections below.  Only three keys
are required — [grid] cells, [model] viscosity, [run] T — everything
else has the documented default.

    [grid]
    cells = 32              ; per-axis cell counts, comma-separated or one
    lengths = 1.0           ; per-axis box lengths (default 1.0 each)

    [model]
    viscosity = 1e-2        ; required
    damping = 0.0           ; strength of the selective dissipation
    damping_power = 2       ; exponent of the damped operator power
    untouched_modes = 0     ; modes left completely undamped
    cutoff_mode = 0         ; last mode of the ramp band
    ramp = linear           ; linear | plain

    [run]
    T = 1.0                 ; required
    dt = 1e-3
    n_modes = 128
    sample_stride = 1
    formulation = spectral  ; spectral | grid | both
    flux_mode = commutator  ; wall closure of the grid path
    extended = false        ; evolve the non-solenoidal form
    truncation =            ; optional span cut for the grid path

    [data]
    seed = 2025
    init_amplitude = 1.0
    init_decay = 1.5
    force_band_lo = 1
    force_band_hi = 6
    force_amplitude = 0.05
    force_seed =            ; default: seed + 1

    [sweep]
    axis = none             ; damping | cutoff | grid | none
    values =                ; required for a real sweep, comma-separated
    seeds =                 ; repetition seeds (default: the data seed)
    power = 1.0             ; graded-norm power of the distance metric

    [pressure]
    grids = 16,24,32        ; refinement ladder of the identity study
    modes = 10

    [output]
    dir = out
    cache =                 ; eigenpair cache dir (default: <dir>/cache)

Each sweep point is simulated, diagnosed, and measured against the
same-seed undamped reference run; failures are isolated per point and
recorded in the manifest.  Outputs are byte-deterministic: rerunning the
same plan with the same seeds reproduces every file exactly.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import certificate_check, convergence_metric, norms_and_energy
from .dynamics import (
    SimulationConfig,
    make_band_forcing,
    make_initial_coeffs,
    simulate,
)
from .grid import GridSpec, build_grid
from .gridflow import GridSimConfig, divergence_monitor, simulate_reformulated
from .pressure import biharmonic_identity_residual, stokes_apply_via_pressure
from .spectral import build_dissipation_profile
from .stokes import build_divfree_basis, compute_stokes_spectrum, spectrum_cache_io

_FORMULATIONS = ("spectral", "grid", "both")
_AXES = ("none", "damping", "cutoff", "grid")


def _fmt(x: float) -> str:
    """Full-width float text: 17 significant digits, '.' decimal."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class ExperimentPlan:
    cells: tuple[int, ...]
    lengths: tuple[float, ...]
    nu: float
    mu: float
    alpha: int
    m0: int
    m: int
    ramp: str
    T: float
    dt: float
    n_modes: int
    sample_stride: int
    formulation: str
    flux_mode: str
    extended: bool
    truncation: int | None
    seed: int
    init_amplitude: float
    init_decay: float
    force_band: tuple[int, int]
    force_amplitude: float
    force_seed: int
    sweep_axis: str
    sweep_values: tuple
    seeds: tuple[int, ...]
    metric_power: float
    pressure_grids: tuple[int, ...]
    pressure_modes: int
    out_dir: Path
    cache_dir: Path
    echo: dict = field(repr=False, default_factory=dict)


def _get(parser, section, key, cast, default=None, required=False):
    if not parser.has_section(section):
        if required:
            raise ValueError(f"missing [{section}] section")
        raw = None
    else:
        raw = parser.get(section, key, fallback=None)
    if raw is None or raw.strip() == "":
        if required:
            raise ValueError(f"[{section}] {key} is required")
        return default
    try:
        return cast(raw.strip())
    except (ValueError, TypeError) as exc:
        raise ValueError(f"[{section}] {key}: {exc}") from exc


def _int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in raw.replace(",", " ").split())

def _float_list(raw: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in raw.replace(",", " ").split())


def _bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def load_config(path: Path | str) -> ExperimentPlan:
    """Parse and validate a plan file; every default is filled in and the
    normalized key/value view is kept for the output manifest."""
    path = Path(path)
    if not path.is_file():
        raise ValueError(f"plan file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ValueError(f"plan parse error: {exc}") from exc

    if not parser.has_section("grid"):
        raise ValueError("missing [grid] section")
    cells = _get(parser, "grid", "cells", _int_list, required=True)
    if len(cells) == 1:
        cells = cells * 2
    if any(c < 4 for c in cells):
        raise ValueError("[grid] cells: need at least 4 cells per axis")
    lengths = _get(parser, "grid", "lengths", _float_list,
                   default=(1.0,) * len(cells))
    if len(lengths) == 1:
        lengths = lengths * len(cells)
    if len(lengths) != len(cells):
        raise ValueError("[grid] lengths: per-axis count differs from cells")
    if any(not l > 0 for l in lengths):
        raise ValueError("[grid] lengths: must be positive")

    nu = _get(parser, "model", "viscosity", float, required=True)
    if nu <= 0:
        raise ValueError("[model] viscosity: must be positive")
    mu = _get(parser, "model", "damping", float, default=0.0)
    if mu < 0:
        raise ValueError("[model] damping: must be nonnegative")
    alpha = _get(parser, "model", "damping_power", int, default=2)
    m0 = _get(parser, "model", "untouched_modes", int, default=0)
    m = _get(parser, "model", "cutoff_mode", int, default=0)
    ramp = _get(parser, "model", "ramp", str, default="linear")
    if ramp not in ("linear", "plain"):
        raise ValueError(f"[model] ramp: unknown schedule {ramp!r}")

    T = _get(parser, "run", "T", float, required=True)
    dt = _get(parser, "run", "dt", float, default=1e-3)
    if not 0 < dt <= T:
        raise ValueError("[run] dt: need 0 < dt <= T")
    n_modes = _get(parser, "run", "n_modes", int, default=128)
    if n_modes < 1:
        raise ValueError("[run] n_modes: must be at least 1")
    stride = _get(parser, "run", "sample_stride", int, default=1)
    if stride < 1:
        raise ValueError("[run] sample_stride: must be at least 1")
    formulation = _get(parser, "run", "formulation", str, default="spectral")
    if formulation not in _FORMULATIONS:
        raise ValueError(f"[run] formulation: must be one of {_FORMULATIONS}")
    flux_mode = _get(parser, "run", "flux_mode", str, default="commutator")
    if flux_mode not in ("commutator", "onesided"):
        raise ValueError("[run] flux_mode: must be commutator or onesided")
    extended = _get(parser, "run", "extended", _bool, default=False)
    truncation = _get(parser, "run", "truncation", int, default=None)
    if truncation is not None and not 0 <= truncation <= n_modes:
        raise ValueError("[run] truncation: outside [0, n_modes]")
    if not 0 <= m0 <= m <= n_modes:
        raise ValueError(
            "[model] untouched_modes/cutoff_mode: need "
            "0 <= untouched_modes <= cutoff_mode <= n_modes"
        )

    seed = _get(parser, "data", "seed", int, default=2025)
    init_amplitude = _get(parser, "data", "init_amplitude", float, default=1.0)
    init_decay = _get(parser, "data", "init_decay", float, default=1.5)
    lo = _get(parser, "data", "force_band_lo", int, default=1)
    hi = _get(parser, "data", "force_band_hi", int, default=6)
    if not 1 <= lo <= hi <= n_modes:
        raise ValueError("[data] force_band_lo/hi: need 1 <= lo <= hi <= n_modes")
    force_amplitude = _get(parser, "data", "force_amplitude", float, default=0.05)
    force_seed = _get(parser, "data", "force_seed", int, default=seed + 1)

    axis = _get(parser, "sweep", "axis", str, default="none")
    if axis not in _AXES:
        raise ValueError(f"[sweep] axis: must be one of {_AXES}")
    if axis == "none":
        values: tuple = ()
    elif axis == "damping":
        values = _get(parser, "sweep", "values", _float_list, required=True)
        if any(v < 0 for v in values):
            raise ValueError("[sweep] values: damping values must be nonnegative")
    else:
        values = _get(parser, "sweep", "values", _int_list, required=True)
        if axis == "cutoff" and any(not 0 <= v <= n_modes for v in values):
            raise ValueError("[sweep] values: cutoffs must lie in [0, n_modes]")
        if axis == "grid" and any(v < 4 for v in values):
            raise ValueError("[sweep] values: grids need at least 4 cells")
    if len(set(values)) != len(values):
        raise ValueError("[sweep] values: duplicates are not allowed")
    ordered = tuple(sorted(values))
    if ordered != values:
        warnings.warn("sweep values were unsorted; sorted ascending")
        values = ordered
    seeds = _get(parser, "sweep", "seeds", _int_list, default=(seed,))
    if len(set(seeds)) != len(seeds):
        raise ValueError("[sweep] seeds: must be distinct")
    power = _get(parser, "sweep", "power", float, default=1.0)

    pgrids = _get(parser, "pressure", "grids", _int_list, default=(16, 24, 32))
    pmodes = _get(parser, "pressure", "modes", int, default=10)

    out_dir = Path(_get(parser, "output", "dir", str, default="out"))
    cache_raw = _get(parser, "output", "cache", str, default=None)
    cache_dir = Path(cache_raw) if cache_raw else out_dir / "cache"

    plan = ExperimentPlan(
        cells=cells, lengths=lengths, nu=nu, mu=mu, alpha=alpha, m0=m0, m=m,
        ramp=ramp, T=T, dt=dt, n_modes=n_modes, sample_stride=stride,
        formulation=formulation, flux_mode=flux_mode, extended=extended,
        truncation=truncation, seed=seed, init_amplitude=init_amplitude,
        init_decay=init_decay, force_band=(lo, hi),
        force_amplitude=force_amplitude, force_seed=force_seed,
        sweep_axis=axis, sweep_values=values, seeds=seeds, metric_power=power,
        pressure_grids=pgrids, pressure_modes=pmodes,
        out_dir=out_dir, cache_dir=cache_dir,
        echo={s: dict(parser.items(s)) for s in parser.sections()},
    )
    return plan


def _free_mode_count(cells: tuple[int, ...]) -> int:
    faces = sum(
        (c - 1) * int(np.prod(cells)) // c for c in cells
    )
    return faces - int(np.prod(cells)) + 1


def ensure_spectrum(plan: ExperimentPlan, cells: tuple[int, ...]):
    """Build or load the eigenpair cache for one grid; returns
    (grid, spectrum, cache_path)."""
    n_free = _free_mode_count(cells)
    if plan.n_modes > n_free:
        raise ValueError(
            f"n_modes={plan.n_modes} exceeds the {n_free} modes resolvable "
            f"on a {'x'.join(map(str, cells))} grid"
        )
    grid = build_grid(GridSpec(dim=len(cells), cells=cells, lengths=plan.lengths))
    plan.cache_dir.mkdir(parents=True, exist_ok=True)
    label = "x".join(map(str, cells))
    path = plan.cache_dir / f"box-{label}-n{plan.n_modes}.eig"
    if path.exists():
        spec = spectrum_cache_io(path, "load", grid=grid)
        if spec.n_modes >= plan.n_modes:
            return grid, spec.head(plan.n_modes), path
    spec = compute_stokes_spectrum(grid, build_divfree_basis(grid), plan.n_modes)
    spectrum_cache_io(path, "save", spectrum=spec)
    return grid, spec, path


@dataclass
class PointResult:
    value: object
    seed: int
    ok: bool
    reason: str = ""
    rho_final: float = float("nan")
    l2_time_integral: float = float("nan")
    h1_sup: float = float("nan")
    worst_slack: float = float("nan")
    energy_bound_ok: bool | None = None
    audit_ok: bool | None = None
    cross_gap: float = float("nan")
    times: np.ndarray | None = None
    series: dict = field(default_factory=dict)


@dataclass
class ResultBundle:
    plan: ExperimentPlan
    points: list[PointResult]
    partial: bool
    slope: float | None
    spectrum_hashes: dict[str, str]


def _point_params(plan: ExperimentPlan, value):
    """Per-point model parameters along the sweep axis."""
    mu, m0, m, cells = plan.mu, plan.m0, plan.m, plan.cells
    if plan.sweep_axis == "damping":
        mu = float(value)
    elif plan.sweep_axis == "cutoff":
        m = int(value)
        m0 = min(m0, m)
    elif plan.sweep_axis == "grid":
        cells = (int(value),) * len(plan.cells)
    return mu, m0, m, cells


def _spectral_run(plan, spectrum, mu, m0, m, initial, forcing):
    lam = spectrum.lambdas[: plan.n_modes]
    profile = build_dissipation_profile(plan.alpha, m0, m, mu, lam, ramp=plan.ramp)
    cfg = SimulationConfig(
        spectrum=spectrum, nu=plan.nu, profile=profile, dt=plan.dt, T=plan.T,
        initial=initial, forcing=forcing, sample_stride=plan.sample_stride,
    )
    return simulate(cfg)


def _grid_run(plan, grid, spectrum, mu, m0, m, initial, forcing):
    cfg = GridSimConfig(
        grid=grid, nu=plan.nu, mu=mu, dt=plan.dt, T=plan.T,
        initial=spectrum.from_coeffs(initial),
        forcing=spectrum.from_coeffs(forcing),
        spectrum=spectrum, flux_mode=plan.flux_mode,
        sample_stride=plan.sample_stride,
    )
    truncation = plan.truncation
    if truncation is None and plan.sweep_axis == "cutoff":
        truncation = m
    return simulate_reformulated(cfg, extended=plan.extended,
                                 truncation=truncation)


def _grid_coeffs(traj, spectrum) -> np.ndarray:
    return np.stack([spectrum.to_coeffs(u) for u in traj.fields])


def _graded_series(lam, power, wu, wv):
    w = wu - wv
    return np.sqrt(np.sum(lam**power * w**2, axis=1))


def _run_point(plan, grids, refs, value, seed):
    """One sweep point; every failure is caught and reported in place."""
    try:
        mu, m0, m, cells = _point_params(plan, value)
        grid, spectrum, _ = grids[cells]
        lam = spectrum.lambdas[: plan.n_modes]
        initial = make_initial_coeffs(lam, plan.n_modes, seed=seed,
                                      gamma=plan.init_decay,
                                      amplitude=plan.init_amplitude)
        forcing = make_band_forcing(plan.n_modes, *plan.force_band,
                                    plan.force_amplitude, seed=plan.force_seed)
        result = PointResult(value=value, seed=seed, ok=True)
        series: dict[str, np.ndarray] = {}

        if plan.formulation in ("spectral", "both"):
            traj = _spectral_run(plan, spectrum, mu, m0, m, initial, forcing)
            record = norms_and_energy(traj, powers=(plan.metric_power, 2.0))
            report = certificate_check(record, traj.config)
            metric = convergence_metric(traj, refs["spectral"][(cells, seed)],
                                        power=plan.metric_power)
            result.rho_final = metric.rho_final
            result.l2_time_integral = metric.l2_time_integral
            result.h1_sup = report.h1_sup
            result.worst_slack = report.worst_slack
            result.energy_bound_ok = report.energy_bound_ok
            result.audit_ok = report.audit_ok
            result.times = traj.times
            series["energy"] = record.energy
            series["h1"] = record.h1
            series["dist"] = metric.series
            series["energy_margin"] = record.energy_margin
            series["diss_untouched"] = record.band_dissipation[0]
            series["diss_ramp"] = record.band_dissipation[1]
            series["diss_tail"] = record.band_dissipation[2]

        if plan.formulation in ("grid", "both"):
            gtraj = _grid_run(plan, grid, spectrum, mu, m0, m, initial, forcing)
            gcoeffs = _grid_coeffs(gtraj, spectrum)
            ref_coeffs = refs["grid"][(cells, seed)]
            gdist = _graded_series(lam, plan.metric_power, gcoeffs, ref_coeffs)
            monitor = divergence_monitor(gtraj)
            result.times = gtraj.times
            series["grid_energy"] = gtraj.energy()
            series["grid_dist"] = gdist
            series["div_sup"] = monitor.sup
            if gtraj.gstar_norms is not None:
                series["gstar"] = gtraj.gstar_norms
            if plan.formulation == "grid":
                result.rho_final = float(np.max(gdist))
                result.l2_time_integral = float(
                    np.trapezoid(np.sum((gcoeffs - ref_coeffs) ** 2, axis=1),
                                 gtraj.times)
                )
            else:
                u_T = gtraj.fields[-1]
                v_T = spectrum.from_coeffs(traj.coeffs[-1])
                result.cross_gap = grid.norm(u_T - v_T) / grid.norm(v_T)

        result.series = series
        return result
    except Exception as exc:  # isolation: one bad point must not sink the sweep
        return PointResult(value=value, seed=seed, ok=False,
                           reason=f"{type(exc).__name__}: {exc}")


def run_experiment(plan: ExperimentPlan, threads: int = 1) -> ResultBundle:
    """Execute the plan: provision eigenpairs, run the undamped reference
    per seed, dispatch sweep points to a worker pool, and fit the
    error-vs-parameter slope."""
    values = plan.sweep_values if plan.sweep_axis != "none" else (None,)
    cell_variants = sorted(
        {_point_params(plan, v)[3] for v in values} | {plan.cells}
    )
    grids: dict[tuple[int, ...], tuple] = {}
    hashes: dict[str, str] = {}
    for cells in cell_variants:
        grid, spectrum, path = ensure_spectrum(plan, cells)
        grids[cells] = (grid, spectrum, path)
        hashes["x".join(map(str, cells))] = hashlib.sha256(
            path.read_bytes()
        ).hexdigest()

    # same-seed undamped references, one per (grid, seed) and formulation
    refs: dict[str, dict] = {"spectral": {}, "grid": {}}
    for cells in grids:
        grid, spectrum, _ = grids[cells]
        lam = spectrum.lambdas[: plan.n_modes]
        for seed in plan.seeds:
            initial = make_initial_coeffs(lam, plan.n_modes, seed=seed,
                                          gamma=plan.init_decay,
                                          amplitude=plan.init_amplitude)
            forcing = make_band_forcing(plan.n_modes, *plan.force_band,
                                        plan.force_amplitude,
                                        seed=plan.force_seed)
            if plan.formulation in ("spectral", "both"):
                refs["spectral"][(cells, seed)] = _spectral_run(
                    plan, spectrum, 0.0, plan.m0, plan.m, initial, forcing
                )
            if plan.formulation in ("grid", "both"):
                gtraj = _grid_run(plan, grid, spectrum, 0.0, plan.m0,
                                  plan.m, initial, forcing)
                refs["grid"][(cells, seed)] = _grid_coeffs(gtraj, spectrum)

    tasks = [(value, seed) for value in values for seed in plan.seeds]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            points = list(
                pool.map(lambda t: _run_point(plan, grids, refs, *t), tasks)
            )
    else:
        points = [_run_point(plan, grids, refs, *t) for t in tasks]

    points.sort(key=lambda p: (_sort_key(p.value), p.seed))
    slope = _fit_slope(plan, points)
    partial = any(not p.ok for p in points)
    return ResultBundle(plan=plan, points=points, partial=partial,
                        slope=slope, spectrum_hashes=hashes)


def _sort_key(value):
    return (0, 0.0) if value is None else (1, float(value))


def _fit_slope(plan, points) -> float | None:
    """log-log slope of the final distance against the swept parameter."""
    if plan.sweep_axis == "none":
        return None
    xs, ys = [], []
    for p in points:
        if p.ok and np.isfinite(p.rho_final) and p.rho_final > 0.0:
            v = float(p.value)
            if v > 0.0:
                xs.append(np.log(v))
                ys.append(np.log(p.rho_final))
    if len(xs) < 2:
        return None
    return float(np.polyfit(xs, ys, 1)[0])


def _label(plan, point) -> str:
    if plan.sweep_axis == "none":
        return f"single-seed{point.seed}"
    return f"{plan.sweep_axis}-{point.value:g}-seed{point.seed}"


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def emit_outputs(bundle: ResultBundle, out_dir: Path | str | None = None) -> list[Path]:
    """Write per-run CSVs, the sweep summary, the long-format table, and
    the JSON manifest; returns the list of files written."""
    plan = bundle.plan
    out = Path(out_dir) if out_dir is not None else plan.out_dir
    runs_dir = out / "runs"
    try:
        runs_dir.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory not writable: {out}") from exc

    written: list[Path] = []
    for point in bundle.points:
        if not point.ok or point.times is None:
            continue
        named = sorted(point.series)
        path = runs_dir / f"{_label(plan, point)}.csv"
        rows = [
            [_fmt(t)] + [_fmt(point.series[k][i]) for k in named]
            for i, t in enumerate(point.times)
        ]
        _write_csv(path, ["time"] + named, rows)
        written.append(path)

    summary = out / "sweep.csv"
    header = [
        "axis", "value", "seed", "status", "reason", "rho_final",
        "l2_time_integral", "h1_sup", "worst_slack", "energy_bound_ok",
        "audit_ok", "cross_gap",
    ]
    rows = []
    for p in bundle.points:
        rows.append([
            plan.sweep_axis,
            "" if p.value is None else _fmt(p.value),
            str(p.seed),
            "ok" if p.ok else "failed",
            p.reason,
            _fmt(p.rho_final) if np.isfinite(p.rho_final) else "",
            _fmt(p.l2_time_integral) if np.isfinite(p.l2_time_integral) else "",
            _fmt(p.h1_sup) if np.isfinite(p.h1_sup) else "",
            _fmt(p.worst_slack) if np.isfinite(p.worst_slack) else "",
            "" if p.energy_bound_ok is None else str(p.energy_bound_ok).lower(),
            "" if p.audit_ok is None else str(p.audit_ok).lower(),
            _fmt(p.cross_gap) if np.isfinite(p.cross_gap) else "",
        ])
    _write_csv(summary, header, rows)
    written.append(summary)

    long_path = out / "long.csv"
    long_rows = []
    for p in bundle.points:
        if not p.ok or p.times is None:
            continue
        for name in sorted(p.series):
            col = p.series[name]
            for t, v in zip(p.times, col):
                long_rows.append([
                    plan.sweep_axis,
                    "" if p.value is None else _fmt(p.value),
                    str(p.seed), _fmt(t), name, _fmt(v),
                ])
    _write_csv(long_path, ["axis", "value", "seed", "time", "quantity",
                           "measurement"], long_rows)
    written.append(long_path)

    manifest = {
        "version": __version__,
        "config_echo": plan.echo,
        "plan": _plan_dict(plan),
        "sweep": {
            "axis": plan.sweep_axis,
            "values": list(plan.sweep_values),
            "seeds": list(plan.seeds),
            "slope": bundle.slope,
        },
        "spectrum_hash": bundle.spectrum_hashes,
        "partial": bundle.partial,
        "failed": [
            {"value": p.value, "seed": p.seed, "reason": p.reason}
            for p in bundle.points if not p.ok
        ],
        "files": sorted(str(p.relative_to(out)) for p in written),
        "float_format": ".17g",
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    written.append(manifest_path)
    return written


def _plan_dict(plan: ExperimentPlan) -> dict:
    d = asdict(plan)
    d.pop("echo")
    for key, val in list(d.items()):
        if isinstance(val, Path):
            d[key] = str(val)
        elif isinstance(val, tuple):
            d[key] = list(val)
    return d


def run_pressure_study(plan: ExperimentPlan) -> list[Path]:
    """Refinement study of the two wall-pressure identities on the leading
    eigenfields; one CSV row per (grid, mode)."""
    out = plan.out_dir
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for nc in plan.pressure_grids:
        cells = (nc,) * len(plan.cells)
        n_free = _free_mode_count(cells)
        k = min(plan.pressure_modes, n_free)
        grid = build_grid(
            GridSpec(dim=len(cells), cells=cells, lengths=plan.lengths)
        )
        plan.cache_dir.mkdir(parents=True, exist_ok=True)
        path = plan.cache_dir / f"box-{'x'.join(map(str, cells))}-n{k}.eig"
        if path.exists():
            spectrum = spectrum_cache_io(path, "load", grid=grid)
        else:
            spectrum = compute_stokes_spectrum(grid, build_divfree_basis(grid), k)
            spectrum_cache_io(path, "save", spectrum=spectrum)
        for j in range(k):
            e = spectrum.eigenfield(j)
            _, first = stokes_apply_via_pressure(e, grid, spectrum=spectrum)
            second = biharmonic_identity_residual(e, grid, spectrum)
            rows.append([str(nc), str(j), _fmt(first), _fmt(second)])
    path = out / "identity-residuals.csv"
    _write_csv(path, ["cells", "mode", "residual_first", "residual_second"],
               rows)
    return [path]
