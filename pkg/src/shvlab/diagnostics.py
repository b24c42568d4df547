"""Run-level measurements on mode-space trajectories.

Everything here is post-processing: graded norm series (exact in the
eigenbasis by Parseval), the long-run energy ceiling and its per-sample
margin, a per-interval audit of the energy inequality against the
integrator's sampling-quadrature estimate, pairwise trajectory distances
for parameter sweeps, and certificate summaries of empirical suprema.

The audit works on the inequality

    dE/dt + nu * |u|_1^2  <=  |f|^2 / (nu * lambda_1)

where E is the squared amplitude and |.|_1 the grade-1 norm.  Between two
samples the left side is measured with a difference quotient plus a
trapezoid; the only systematic error that can push the measured slack
above zero is the trapezoid's curvature term, so the per-interval
estimate is the centered second difference of the integrand divided
by 12 (plus integrator round-off, which is orders below it).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import SimulationConfig, Trajectory


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Norm and audit series for one trajectory.

    band_dissipation rows split the instantaneous dissipation rate
    2*(nu*lam + mu*phi)*a^2 at the damping profile's pass-band edges:
    untouched low modes, the ramp band, and the fully damped tail.
    """

    times: np.ndarray
    energy: np.ndarray
    h1: np.ndarray
    power_norms: dict[float, np.ndarray]
    band_dissipation: np.ndarray  # (3, k)
    band_edges: tuple[int, int]
    energy_ceiling: float
    energy_margin: np.ndarray  # ceiling - energy, unclamped
    audit_slack: np.ndarray  # (k-1,), unclamped
    audit_estimate: np.ndarray  # (k-1,)
    h1_sup: float
    power_sup: dict[float, float] = field(repr=False)
    dissipation_integrals: dict[float, float] = field(repr=False)
    nu: float = 0.0
    lam1: float = 0.0
    force_norm: float = 0.0

    @property
    def worst_slack(self) -> float:
        return float(np.max(self.audit_slack)) if self.audit_slack.size else -np.inf


def norms_and_energy(
    traj: Trajectory, powers: tuple[float, ...] = (1.0, 2.0)
) -> DiagnosticsRecord:
    """Evaluate graded norms, the energy ceiling, and the per-interval
    inequality audit for a mode-space trajectory."""
    if len(powers) == 0:
        raise ValueError("need at least one norm power")
    config = traj.config
    a = traj.coeffs
    n = a.shape[1]
    lam = config.spectrum.lambdas[:n]
    lam1 = float(lam[0])
    phi = config.profile.phi[:n]
    mu = config.profile.mu

    energy = np.sum(a**2, axis=1)
    h1 = np.sqrt(np.sum(lam * a**2, axis=1))
    power_norms = {
        float(p): np.sqrt(np.sum(lam**p * a**2, axis=1)) for p in powers
    }

    m0, m = config.profile.m0, config.profile.m
    rate = 2.0 * (config.nu * lam + mu * phi) * a**2
    band = np.stack(
        [
            np.sum(rate[:, :m0], axis=1),
            np.sum(rate[:, m0:m], axis=1),
            np.sum(rate[:, m:], axis=1),
        ]
    )

    force_norm = float(np.sqrt(np.sum(config.forcing**2)))
    ceiling = float(energy[0] + (force_norm / (config.nu * lam1)) ** 2)
    margin = ceiling - energy

    k = energy.shape[0]
    if k >= 2:
        dt_s = np.diff(traj.times)
        g = config.nu * h1**2
        lhs = np.diff(energy) / dt_s + 0.5 * (g[1:] + g[:-1])
        slack = lhs - force_norm**2 / (config.nu * lam1)
        if k >= 3:
            curv = np.abs(np.diff(g, 2)) / 12.0
            est = np.empty(k - 1)
            est[0] = curv[0]
            est[-1] = curv[-1]
            for i in range(1, k - 2):
                est[i] = max(curv[i - 1], curv[i])
        else:
            est = np.full(k - 1, np.nan)
    else:
        slack = np.empty(0)
        est = np.empty(0)

    diss = {
        float(p): float(
            np.trapezoid(np.sum(lam ** (p + 1.0) * a**2, axis=1), traj.times)
        )
        for p in powers
    }

    return DiagnosticsRecord(
        times=traj.times,
        energy=energy,
        h1=h1,
        power_norms=power_norms,
        band_dissipation=band,
        band_edges=(m0, m),
        energy_ceiling=ceiling,
        energy_margin=margin,
        audit_slack=slack,
        audit_estimate=est,
        h1_sup=float(np.max(h1)),
        power_sup={p: float(np.max(s)) for p, s in power_norms.items()},
        dissipation_integrals=diss,
        nu=config.nu,
        lam1=lam1,
        force_norm=force_norm,
    )


@dataclass(frozen=True)
class ConvergenceMetric:
    """Distance history between two runs on the same mode span."""

    rho_final: float
    series: np.ndarray  # graded norm of the difference per sample
    sup_series: np.ndarray  # running supremum of `series`
    l2_time_integral: float  # trapezoid of the squared plain norm


def convergence_metric(
    traj_u: Trajectory, traj_v: Trajectory, power: float = 1.0
) -> ConvergenceMetric:
    """Running supremum of the graded difference norm, its final value,
    and the time integral of the squared plain difference norm."""
    if traj_u.coeffs.shape != traj_v.coeffs.shape:
        raise ValueError("mismatched sampling: coefficient blocks differ in shape")
    if not np.array_equal(traj_u.times, traj_v.times):
        raise ValueError("mismatched sampling: sample times differ")
    n = traj_u.coeffs.shape[1]
    lam = traj_u.config.spectrum.lambdas[:n]
    w = traj_u.coeffs - traj_v.coeffs
    series = np.sqrt(np.sum(lam**power * w**2, axis=1))
    sup_series = np.maximum.accumulate(series)
    integral = float(np.trapezoid(np.sum(w**2, axis=1), traj_u.times))
    return ConvergenceMetric(
        rho_final=float(sup_series[-1]),
        series=series,
        sup_series=sup_series,
        l2_time_integral=integral,
    )


@dataclass(frozen=True)
class CertificateReport:
    h1_sup: float
    power_sup: dict[float, float]
    dissipation_integrals: dict[float, float]
    min_energy_margin: float
    energy_bound_ok: bool
    worst_slack: float
    audit_ok: bool


def certificate_check(
    record: DiagnosticsRecord, config: SimulationConfig
) -> CertificateReport:
    """Summarize a record into pass/fail certificates: the energy ceiling
    must never be crossed, and the audit slack must stay within the
    quadrature estimate on every interval."""
    min_margin = float(np.min(record.energy_margin))
    bound_ok = min_margin >= -1e-12 * record.energy_ceiling
    if record.audit_slack.size and np.all(np.isfinite(record.audit_estimate)):
        scale = config.nu * float(np.max(record.h1)) ** 2 + record.force_norm**2
        audit_ok = bool(
            np.all(record.audit_slack <= record.audit_estimate + 1e-12 * scale)
        )
    else:
        audit_ok = record.audit_slack.size == 0
    return CertificateReport(
        h1_sup=record.h1_sup,
        power_sup=dict(record.power_sup),
        dissipation_integrals=dict(record.dissipation_integrals),
        min_energy_margin=min_margin,
        energy_bound_ok=bound_ok,
        worst_slack=record.worst_slack,
        audit_ok=audit_ok,
    )


def suprema_uniform(values: list[float], rtol: float = 0.1) -> bool:
    """Whether a family of positive suprema agrees to the given relative
    spread — the observable form of a parameter-independent bound."""
    vals = np.asarray(values, dtype=float)
    if vals.size == 0 or np.any(~np.isfinite(vals)) or np.any(vals <= 0.0):
        return False
    return bool((vals.max() - vals.min()) <= rtol * vals.max())
