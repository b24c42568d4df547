"""Plan parsing, sweep orchestration, output emission, and the CLI."""

import csv
import hashlib
import json
import subprocess

import numpy as np
import pytest

from shvlab.cli import main
from shvlab.harness import emit_outputs, load_config, run_experiment

MINIMAL = """
[grid]
cells = 8

[model]
viscosity = 1e-2

[run]
T = 0.01
"""


def _plan_file(tmp_path, body, name="plan.ini"):
    path = tmp_path / name
    path.write_text(body)
    return path


def _tiny_sweep(tmp_path, extra="", axis_block=None):
    out = tmp_path / "out"
    axis_block = axis_block or """
[sweep]
axis = damping
values = 1e-6, 1e-5
seeds = 3
"""
    body = f"""
[grid]
cells = 8

[model]
viscosity = 1e-2
damping = 1e-6

[run]
T = 0.01
dt = 1e-3
n_modes = 8
{extra}

[data]
seed = 42
{axis_block}
[output]
dir = {out}
"""
    return _plan_file(tmp_path, body), out


def test_minimal_plan_defaults(tmp_path):
    plan = load_config(_plan_file(tmp_path, MINIMAL))
    assert plan.cells == (8, 8)
    assert plan.lengths == (1.0, 1.0)
    assert plan.mu == 0.0 and plan.alpha == 2
    assert plan.m0 == 0 and plan.m == 0 and plan.ramp == "linear"
    assert plan.dt == 1e-3 and plan.n_modes == 128
    assert plan.formulation == "spectral" and plan.flux_mode == "commutator"
    assert plan.extended is False and plan.truncation is None
    assert plan.seed == 2025 and plan.force_seed == 2026
    assert plan.sweep_axis == "none" and plan.sweep_values == ()
    assert plan.seeds == (2025,) and plan.metric_power == 1.0
    assert plan.out_dir.name == "out"
    assert plan.cache_dir == plan.out_dir / "cache"


def test_missing_grid_section(tmp_path):
    with pytest.raises(ValueError, match=r"missing \[grid\] section"):
        load_config(_plan_file(tmp_path, "[model]\nviscosity = 1e-2\n"))


@pytest.mark.parametrize(
    "mutate, match",
    [
        ("viscosity = 1e-2", r"missing \[run\] section"),  # drop the [run] block
        ("viscosity = -1", r"\[model\] viscosity"),
        ("viscosity = abc", r"\[model\] viscosity"),
        ("damping = -2e-3", r"\[model\] damping"),
        ("ramp = cubic", r"\[model\] ramp"),
        ("cutoff_mode = 400", r"untouched_modes/cutoff_mode"),
    ],
)
def test_field_errors_name_the_field(tmp_path, mutate, match):
    run_block = "" if "missing" in match else "\n[run]\nT = 0.01\n"
    body = f"[grid]\ncells = 8\n\n[model]\n{mutate}\n{run_block}"
    if "viscosity" not in mutate:
        body = body.replace(f"[model]\n{mutate}",
                            f"[model]\nviscosity = 1e-2\n{mutate}")
    with pytest.raises(ValueError, match=match):
        load_config(_plan_file(tmp_path, body))


@pytest.mark.parametrize(
    "block, match",
    [
        ("[run]\nT =", r"\[run\] T is required"),
        ("[run]\nT = 0.01\ndt = 0.5", r"\[run\] dt"),
        ("[run]\nT = 0.01\nformulation = dual", r"\[run\] formulation"),
        ("[run]\nT = 0.01\nflux_mode = ghost", r"\[run\] flux_mode"),
        ("[run]\nT = 0.01\ntruncation = 900", r"\[run\] truncation"),
        ("[run]\nT = 0.01\n\n[data]\nforce_band_hi = 500",
         r"\[data\] force_band"),
        ("[run]\nT = 0.01\n\n[sweep]\naxis = time", r"\[sweep\] axis"),
        ("[run]\nT = 0.01\n\n[sweep]\naxis = damping", r"\[sweep\] values"),
        ("[run]\nT = 0.01\n\n[sweep]\naxis = damping\nvalues = 1e-3, 1e-3",
         r"duplicates"),
        ("[run]\nT = 0.01\n\n[sweep]\naxis = cutoff\nvalues = 4, 300",
         r"\[sweep\] values"),
        ("[run]\nT = 0.01\n\n[sweep]\naxis = damping\nvalues = 1e-4\n"
         "seeds = 5, 5", r"\[sweep\] seeds"),
    ],
)
def test_more_field_errors(tmp_path, block, match):
    body = f"[grid]\ncells = 8\n\n[model]\nviscosity = 1e-2\n\n{block}\n"
    with pytest.raises(ValueError, match=match):
        load_config(_plan_file(tmp_path, body))


def test_lengths_must_match_cells(tmp_path):
    body = ("[grid]\ncells = 8\nlengths = 1.0, 2.0, 3.0\n\n"
            "[model]\nviscosity = 1e-2\n\n[run]\nT = 0.01\n")
    with pytest.raises(ValueError, match=r"\[grid\] lengths"):
        load_config(_plan_file(tmp_path, body))


def test_unsorted_values_warned_and_sorted(tmp_path):
    path, _ = _tiny_sweep(tmp_path, axis_block="""
[sweep]
axis = damping
values = 1e-3, 1e-5, 1e-4
""")
    with pytest.warns(UserWarning, match="unsorted"):
        plan = load_config(path)
    assert plan.sweep_values == (1e-5, 1e-4, 1e-3)


def test_parse_and_missing_file_errors(tmp_path):
    with pytest.raises(ValueError, match="not found"):
        load_config(tmp_path / "nope.ini")
    bad = _plan_file(tmp_path, "[grid\ncells = 8\n")
    with pytest.raises(ValueError, match="parse error"):
        load_config(bad)


def test_sweep_outputs_and_float_round_trip(tmp_path):
    path, out = _tiny_sweep(tmp_path)
    plan = load_config(path)
    bundle = run_experiment(plan)
    files = emit_outputs(bundle)

    assert not bundle.partial
    assert [p.value for p in bundle.points] == [1e-6, 1e-5]
    assert bundle.slope is not None and bundle.slope > 0
    assert all(f.exists() for f in files)

    raw = (out / "sweep.csv").read_bytes()
    assert b"\r\n" in raw  # RFC-4180-style line endings
    with open(out / "sweep.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    for row, point in zip(rows, bundle.points):
        assert row["status"] == "ok"
        assert float(row["rho_final"]) == point.rho_final  # 17g round-trips
        assert float(row["value"]) == point.value
        assert "," not in row["rho_final"]  # '.' decimal separator only

    with open(out / "runs" / "damping-1e-06-seed3.csv", newline="") as fh:
        header = next(csv.reader(fh))
    assert header[0] == "time"
    assert set(header) >= {"energy", "h1", "dist", "energy_margin"}


def test_rerun_is_byte_identical(tmp_path):
    path, out = _tiny_sweep(tmp_path)
    plan = load_config(path)

    def run_once():
        emit_outputs(run_experiment(plan))
        return {
            f.relative_to(out).as_posix(): hashlib.sha256(f.read_bytes()).hexdigest()
            for f in sorted(out.rglob("*")) if f.is_file()
        }

    first = run_once()
    second = run_once()
    assert first == second
    assert any(name.endswith("manifest.json") for name in first)


def test_grid_point_failure_is_isolated(tmp_path):
    # second damping value pushes the explicit step over its limit
    path, out = _tiny_sweep(tmp_path, extra="formulation = grid", axis_block="""
[sweep]
axis = damping
values = 1e-6, 1.0
seeds = 3
""")
    plan = load_config(path)
    bundle = run_experiment(plan)
    assert bundle.partial
    ok = [p for p in bundle.points if p.ok]
    bad = [p for p in bundle.points if not p.ok]
    assert len(ok) == 1 and len(bad) == 1
    assert "stability" in bad[0].reason
    assert np.isfinite(ok[0].rho_final)

    emit_outputs(bundle)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["partial"] is True
    assert manifest["failed"][0]["value"] == 1.0
    assert "stability" in manifest["failed"][0]["reason"]


def test_manifest_hash_matches_cache_file(tmp_path):
    path, out = _tiny_sweep(tmp_path)
    plan = load_config(path)
    emit_outputs(run_experiment(plan))
    manifest = json.loads((out / "manifest.json").read_text())
    cache = plan.cache_dir / "box-8x8-n8.eig"
    assert cache.exists()
    assert manifest["spectrum_hash"]["8x8"] == hashlib.sha256(
        cache.read_bytes()
    ).hexdigest()


def test_cli_fatal_on_bad_plan(tmp_path, capsys):
    assert main(["sweep", "--config", str(tmp_path / "missing.ini")]) == 1
    bad = _plan_file(tmp_path, "[grid]\ncells = 8\n\n[model]\nviscosity = -1\n"
                               "\n[run]\nT = 0.01\n")
    assert main(["sweep", "--config", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "viscosity" in err


def test_cli_partial_exit_code(tmp_path):
    path, _ = _tiny_sweep(tmp_path, extra="formulation = grid", axis_block="""
[sweep]
axis = damping
values = 1e-6, 1.0
seeds = 3
""")
    assert main(["sweep", "--config", str(path)]) == 2


def test_cli_run_ignores_sweep_axis(tmp_path):
    path, out = _tiny_sweep(tmp_path)
    assert main(["run", "--config", str(path)]) == 0
    with open(out / "sweep.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1  # one seed, sweep axis discarded
    assert rows[0]["axis"] == "none" and rows[0]["value"] == ""


def test_cli_seed_and_out_overrides(tmp_path):
    path, _ = _tiny_sweep(tmp_path)
    moved = tmp_path / "elsewhere"
    assert main(["run", "--config", str(path), "--out", str(moved),
                 "--seed", "7"]) == 0
    manifest = json.loads((moved / "manifest.json").read_text())
    assert manifest["sweep"]["seeds"] == [7]
    assert (moved / "cache" / "box-8x8-n8.eig").exists()


def test_cli_eigen_prints_hash(tmp_path, capsys):
    path, _ = _tiny_sweep(tmp_path)
    assert main(["eigen", "--config", str(path)]) == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("8x8") and "sha256=" in line


def test_cli_verify_maps_pytest_exit(tmp_path, monkeypatch):
    import shvlab.cli as cli_mod

    target = tmp_path / "test_acceptance.py"
    target.write_text("")
    calls = []

    def fake_run(cmd, check):
        calls.append(cmd)
        class Proc:
            returncode = len(calls) - 1  # 0 first call, 1 second
        return Proc()

    monkeypatch.setattr(cli_mod, "_acceptance_path", lambda: target)
    monkeypatch.setattr(subprocess, "run", fake_run)
    assert main(["verify"]) == 0
    assert main(["verify"]) == 1
    assert all(str(target) in map(str, cmd) for cmd in calls)


def test_pressure_study_emits_residuals(tmp_path):
    out = tmp_path / "out"
    body = f"""
[grid]
cells = 8

[model]
viscosity = 1e-2

[run]
T = 0.01

[pressure]
grids = 8
modes = 2

[output]
dir = {out}
"""
    assert main(["pressure", "--config", str(_plan_file(tmp_path, body))]) == 0
    with open(out / "identity-residuals.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    for row in rows:
        assert row["cells"] == "8"
        assert 0 < float(row["residual_first"]) < 1
        assert float(row["residual_second"]) > 0
