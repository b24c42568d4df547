"""Grid-space integrator tests.

Oracles: manual right-hand-side assembly at mu=0, a standalone Neumann
heat march driven by the same RK4 tableau (the cell dilatation of the
extended system must reproduce it to round-off), the analytic decay rate
of the seeded dilatation mode, and the mode-space integrator run on the
identical problem (the commutator wall closure makes the two paths the
same algebra, so their gap is pure round-off).
"""

import numpy as np
import pytest

from shvlab.dynamics import (
    BlowUpError,
    SimulationConfig,
    make_band_forcing,
    make_initial_coeffs,
    simulate,
)
from shvlab.gridflow import (
    GridSimConfig,
    GridState,
    divergence_monitor,
    heat_divergence_oracle,
    reformulated_rhs,
    rk4_stability_limit,
    simulate_reformulated,
    with_seeded_divergence,
)
from shvlab.operators import advect_skew, apply_laplacian, divergence, gradient
from shvlab.pressure import stokes_pressure_solve
from shvlab.spectral import build_dissipation_profile
from shvlab.stokes import leray_project


def _coeff_field(spectrum, entries):
    c = np.zeros(spectrum.n_modes)
    for j, v in entries.items():
        c[j] = v
    return spectrum.from_coeffs(c)


def _low_mode_data(spectrum, seed_init=42, seed_force=9, k=64):
    a = np.zeros(spectrum.n_modes)
    a[:k] = make_initial_coeffs(spectrum.lambdas[:k], k, seed=seed_init)
    f = np.zeros(spectrum.n_modes)
    f[:k] = make_band_forcing(k, 1, 6, 0.05, seed=seed_force)
    return a, f


def test_config_rejects_bad_values(grid16, spectrum16):
    u0 = _coeff_field(spectrum16, {0: 1.0})
    good = dict(grid=grid16, nu=1e-2, mu=0.0, dt=1e-3, T=0.1, initial=u0)
    GridSimConfig(**good)
    for bad in (
        dict(nu=0.0),
        dict(mu=-1e-6),
        dict(dt=-1e-3),
        dict(T=0.0),
        dict(flux_mode="upwind"),
        dict(sample_stride=0),
    ):
        with pytest.raises(ValueError):
            GridSimConfig(**{**good, **bad})


def test_stability_limit_spectrum_cap(grid16, spectrum16):
    u0 = _coeff_field(spectrum16, {0: 1.0})
    cfg = GridSimConfig(
        grid=grid16, nu=1e-2, mu=1e-4, dt=1e-5, T=1e-4, initial=u0,
        spectrum=spectrum16.head(32),
    )
    plain = rk4_stability_limit(cfg, None)
    capped = rk4_stability_limit(cfg, 8)
    # the grid Laplacian bound exceeds the 32-mode span's top eigenvalue
    assert capped > plain > 0.0


def test_dt_above_limit_rejected(grid16, spectrum16):
    u0 = _coeff_field(spectrum16, {0: 1.0})
    cfg = GridSimConfig(
        grid=grid16, nu=1e-2, mu=1e-2, dt=1e-3, T=0.1, initial=u0,
    )
    with pytest.raises(ValueError, match="stability"):
        simulate_reformulated(cfg)


def test_step_count_and_stride_validation(grid16, spectrum16):
    u0 = _coeff_field(spectrum16, {0: 1.0})
    with pytest.raises(ValueError, match="integer number"):
        simulate_reformulated(
            GridSimConfig(grid=grid16, nu=1e-2, mu=0.0, dt=1e-3, T=0.0105,
                          initial=u0)
        )
    with pytest.raises(ValueError, match="stride"):
        simulate_reformulated(
            GridSimConfig(grid=grid16, nu=1e-2, mu=0.0, dt=1e-3, T=0.01,
                          initial=u0, sample_stride=3)
        )


def test_rhs_mu_zero_is_plain_form(grid16, spectrum16):
    # at mu=0 only the viscous block, its pressure correction, and the
    # projected transport remain; replicate the assembly verbatim
    u = _coeff_field(spectrum16, {2: 0.8, 7: -0.3})
    cfg = GridSimConfig(grid=grid16, nu=3e-2, mu=0.0, dt=1e-4, T=1e-3, initial=u)
    rhs, removed = reformulated_rhs(GridState(u, 0.0), cfg)
    visc = cfg.nu * apply_laplacian(u, grid16)
    ps = stokes_pressure_solve(u, grid16, flux_mode="commutator", warn=False)
    manual = visc - cfg.nu * gradient(ps.p_s, grid16)
    manual = manual - leray_project(advect_skew(u, u, grid16), grid16)
    assert removed == 0.0
    for a, b in zip(rhs.components, manual.components):
        assert np.array_equal(a, b)


def test_extended_matches_plain_on_solenoidal(grid16, spectrum16):
    # the dilatation corrections must cancel on a divergence-free state
    # when the commuted closure feeds both the volume term and the flux
    e = _coeff_field(spectrum16, {3: 0.7, 11: 0.2})
    cfg = GridSimConfig(
        grid=grid16, nu=1e-2, mu=1e-4, dt=1e-5, T=1e-4, initial=e,
        spectrum=spectrum16, flux_mode="onesided",
    )
    r_p, _ = reformulated_rhs(GridState(e, 0.0), cfg, extended=False)
    r_e, _ = reformulated_rhs(GridState(e, 0.0), cfg, extended=True)
    assert grid16.norm(r_e - r_p) <= 1e-9 * grid16.norm(r_p)


def test_full_span_truncation_removes_block(grid16, spectrum16):
    # complement of the whole resolved span: the hyperviscous block must
    # vanish identically, reproducing the mu=0 trajectory bit for bit
    a, f = _low_mode_data(spectrum16)
    u0, fg = spectrum16.from_coeffs(a), spectrum16.from_coeffs(f)
    common = dict(grid=grid16, nu=1e-2, dt=1e-3, T=0.02, initial=u0,
                  forcing=fg, spectrum=spectrum16)
    ref = simulate_reformulated(GridSimConfig(mu=0.0, **common))
    cut = simulate_reformulated(
        GridSimConfig(mu=1e-4, **common), truncation=spectrum16.n_modes
    )
    for uf, vf in zip(ref.fields, cut.fields):
        assert grid16.norm(uf - vf) == 0.0


def test_truncation_complement_orthogonal_to_leading_span(grid16, spectrum16):
    # what truncation leaves of the block carries no leading-mode content
    m = 12
    u = spectrum16.from_coeffs(_low_mode_data(spectrum16)[0])
    base = dict(grid=grid16, nu=1e-2, dt=1e-5, T=1e-4, initial=u,
                spectrum=spectrum16)
    r_cut, _ = reformulated_rhs(
        GridState(u, 0.0), GridSimConfig(mu=1e-3, **base), truncation=m
    )
    r_nse, _ = reformulated_rhs(GridState(u, 0.0), GridSimConfig(mu=0.0, **base))
    tail = (r_nse - r_cut) * (1.0 / 1e-3)
    scale = grid16.norm(tail)
    for j in range(m):
        assert abs(grid16.inner(spectrum16.eigenfield(j), tail)) <= 1e-10 * scale


def test_unforced_energy_nonincreasing(grid16, spectrum16):
    a, _ = _low_mode_data(spectrum16)
    cfg = GridSimConfig(
        grid=grid16, nu=1e-2, mu=0.0, dt=1e-3, T=0.05,
        initial=spectrum16.from_coeffs(a), sample_stride=5,
    )
    en = simulate_reformulated(cfg).energy()
    assert np.all(np.diff(en) <= 0.0)


def test_simulation_deterministic(grid16, spectrum16):
    a, f = _low_mode_data(spectrum16)
    def run():
        cfg = GridSimConfig(
            grid=grid16, nu=1e-2, mu=1e-4, dt=1e-3, T=0.02,
            initial=spectrum16.from_coeffs(a), forcing=spectrum16.from_coeffs(f),
            spectrum=spectrum16,
        )
        return simulate_reformulated(cfg, truncation=16)
    t1, t2 = run(), run()
    assert np.array_equal(t1.gstar_norms, t2.gstar_norms)
    for uf, vf in zip(t1.fields, t2.fields):
        for a1, a2 in zip(uf.components, vf.components):
            assert np.array_equal(a1, a2)


def test_crosspath_nse_commutator_roundoff(grid16, spectrum16):
    # with the commutator closure the grid march and the mode-space march
    # integrate the same finite-dimensional system: measured 8.7e-14
    a, f = _low_mode_data(spectrum16)
    T, dt = 0.2, 1e-3
    prof = build_dissipation_profile(2, 4, 4, 0.0, spectrum16.lambdas,
                                     ramp="plain")
    scfg = SimulationConfig(spectrum=spectrum16, nu=1e-2, profile=prof, dt=dt,
                            T=T, initial=a, forcing=f,
                            sample_stride=round(T / dt))
    u_s = spectrum16.from_coeffs(simulate(scfg).coeffs[-1])
    gaps = {}
    for flux in ("commutator", "onesided"):
        gcfg = GridSimConfig(
            grid=grid16, nu=1e-2, mu=0.0, dt=dt, T=T,
            initial=spectrum16.from_coeffs(a), forcing=spectrum16.from_coeffs(f),
            spectrum=spectrum16, flux_mode=flux, sample_stride=round(T / dt),
        )
        u_g = simulate_reformulated(gcfg).fields[-1]
        gaps[flux] = grid16.norm(u_g - u_s) / grid16.norm(u_s)
    assert gaps["commutator"] <= 1e-10
    # the continuum-tracking closure is a genuinely different scheme;
    # its gap is discretization error, not round-off (measured 8.4e-3)
    assert 1e-4 <= gaps["onesided"] <= 2e-2


def test_extended_divergence_matches_heat_oracle(grid16, spectrum16):
    # the cell dilatation of the extended march must solve the zero-flux
    # heat equation: same tableau, same matrix, so round-off agreement
    a, _ = _low_mode_data(spectrum16, seed_init=5)
    u0 = with_seeded_divergence(spectrum16.from_coeffs(a), grid16, 1e-3)
    d0 = divergence(u0, grid16)
    nu, dt, steps, stride = 0.05, 2e-5, 100, 10
    cfg = GridSimConfig(
        grid=grid16, nu=nu, mu=1e-4, dt=dt, T=dt * steps, initial=u0,
        spectrum=spectrum16, flux_mode="commutator", sample_stride=stride,
    )
    traj = simulate_reformulated(cfg, extended=True)
    _, cells = heat_divergence_oracle(d0, grid16, nu, dt, steps,
                                      sample_stride=stride)
    for uf, dc in zip(traj.fields, cells):
        assert np.max(np.abs(divergence(uf, grid16) - dc)) <= 1e-12

    report = divergence_monitor(traj)
    assert not report.increased
    assert np.all(np.diff(report.sup) <= 0.0)
    # seeded mode is the slowest zero-flux eigenfunction; its discrete
    # decay rate follows from the 1-d three-point symbol
    h = grid16.h[0]
    lam = 2.0 * 2.0 * (1.0 - np.cos(np.pi * h)) / h**2
    decay = 1e-3 * np.exp(-nu * lam * traj.times)
    assert np.allclose(report.sup, decay, rtol=1e-5)


def test_divergence_free_data_stays_at_noise_floor(grid16, spectrum16):
    a, _ = _low_mode_data(spectrum16)
    cfg = GridSimConfig(
        grid=grid16, nu=1e-2, mu=1e-4, dt=1e-3, T=0.02,
        initial=spectrum16.from_coeffs(a), spectrum=spectrum16,
        flux_mode="commutator", sample_stride=2,
    )
    report = divergence_monitor(simulate_reformulated(cfg, extended=True))
    assert np.all(report.sup <= 1e-10)


def test_seeded_divergence_amplitude_and_walls(grid16, spectrum16):
    u = spectrum16.from_coeffs(_low_mode_data(spectrum16)[0])
    seeded = with_seeded_divergence(u, grid16, 1e-3)
    assert np.max(np.abs(divergence(seeded, grid16))) == pytest.approx(
        1e-3, rel=1e-12
    )
    for c, comp in enumerate(seeded.components):
        wall = [np.take(comp, 0, axis=c), np.take(comp, -1, axis=c)]
        assert all(np.all(w == 0.0) for w in wall)


def test_gstar_norms_reported_only_under_truncation(grid16, spectrum16):
    a, f = _low_mode_data(spectrum16)
    common = dict(
        grid=grid16, nu=1e-2, mu=1e-4, dt=1e-3, T=0.01,
        initial=spectrum16.from_coeffs(a), forcing=spectrum16.from_coeffs(f),
        spectrum=spectrum16,
    )
    cut = simulate_reformulated(GridSimConfig(**common), truncation=8)
    assert cut.gstar_norms is not None
    assert cut.gstar_norms.shape == cut.times.shape
    assert cut.gstar_norms[0] == 0.0
    assert np.all(cut.gstar_norms >= 0.0) and np.any(cut.gstar_norms > 0.0)
    plain = simulate_reformulated(GridSimConfig(**common))
    assert plain.gstar_norms is None


def test_blowup_reported_with_time(grid16, spectrum16):
    u0 = _coeff_field(spectrum16, {0: 1e6})
    cfg = GridSimConfig(
        grid=grid16, nu=1e-6, mu=0.0, dt=0.05, T=1.0, initial=u0,
        sample_stride=1,
    )
    with pytest.raises(BlowUpError) as info:
        simulate_reformulated(cfg)
    assert 0.0 < info.value.time <= 1.0
