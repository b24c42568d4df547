"""Galerkin dynamics in the mode basis with an integrating-factor RK4.

The stiff diagonal part (viscous + spectrally-damped) is handled exactly by
exponential factors; the skew-symmetric transport term and the constant
forcing ride through classical RK4 stages.  With the nonlinearity and
forcing off, one step IS the exponential decay, to the last bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid
from .operators import advect_skew
from .spectral import DissipationProfile, if_exponential
from .stokes import StokesSpectrum


class BlowUpError(RuntimeError):
    """State left the finite range; carries the blow-up time and the last
    finite coefficient vector."""

    def __init__(self, time: float, last_state: np.ndarray):
        super().__init__(f"nonfinite state at t={time!r}")
        self.time = time
        self.last_state = last_state


@dataclass(frozen=True)
class SimulationConfig:
    spectrum: StokesSpectrum
    nu: float
    profile: DissipationProfile
    dt: float
    T: float
    initial: np.ndarray
    forcing: np.ndarray
    nonlinearity: bool = True
    sample_stride: int = 1

    def __post_init__(self):
        n = self.initial.shape[0]
        if self.nu <= 0:
            raise ValueError(f"nu must be > 0, got {self.nu}")
        if not 0 < self.dt <= self.T:
            raise ValueError(f"need 0 < dt <= T, got dt={self.dt} T={self.T}")
        if n > self.spectrum.n_modes:
            raise ValueError(f"{n} modes requested, spectrum holds {self.spectrum.n_modes}")
        if self.profile.n < n:
            raise ValueError("damping profile shorter than the mode vector")
        if self.forcing.shape != (n,):
            raise ValueError("forcing and initial data lengths differ")
        if not np.all(np.isfinite(self.forcing)):
            raise ValueError("forcing must be finite")
        if self.sample_stride < 1:
            raise ValueError("sample_stride must be >= 1")

    @property
    def n(self) -> int:
        return self.initial.shape[0]

    @property
    def forcing_bound(self) -> float:
        return float(np.sqrt(np.sum(self.forcing**2)))


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray  # (k,), uniform stride
    coeffs: np.ndarray  # (k, n)
    config: SimulationConfig

    def energy(self) -> np.ndarray:
        return np.sum(self.coeffs**2, axis=1)


def make_initial_coeffs(
    lambdas: np.ndarray, n: int, seed: int, gamma: float = 1.5, amplitude: float = 1.0
) -> np.ndarray:
    """Seeded random data with power-law decay: a_j ~ lambda_j**(-gamma) xi_j.

    Draws are sequential, so two vectors with the same seed agree on their
    common leading modes regardless of n.
    """
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal(n)
    return amplitude * np.asarray(lambdas)[:n] ** (-gamma) * xi


def make_band_forcing(
    n: int, lo: int, hi: int, amplitude: float, seed: int | None = None
) -> np.ndarray:
    """Constant-in-time forcing supported on modes lo..hi (1-based, inclusive)."""
    if not 1 <= lo <= hi <= n:
        raise ValueError(f"need 1 <= lo <= hi <= {n}")
    f = np.zeros(n)
    if seed is None:
        f[lo - 1 : hi] = amplitude
    else:
        rng = np.random.default_rng(seed)
        f[lo - 1 : hi] = amplitude * rng.standard_normal(hi - lo + 1)
    return f


def nonlinear_coeffs(a: np.ndarray, spectrum: StokesSpectrum, grid: Grid) -> np.ndarray:
    """Mode coefficients of the skew transport term of the reconstructed field.

    Projection onto the retained modes happens by taking the inner products
    themselves; the result is energy-neutral against a by construction.
    """
    n = a.shape[0]
    modes = spectrum.modes[:, :n]
    u = grid.unpack(modes @ a)
    nl = advect_skew(u, u, grid)
    return grid.volume * (modes.T @ grid.pack(nl))


def galerkin_rhs(a: np.ndarray, t: float, config: SimulationConfig) -> np.ndarray:
    n = a.shape[0]
    lam = config.spectrum.lambdas[:n]
    phi = config.profile.phi[:n]
    out = -(config.nu * lam + config.profile.mu * phi) * a + config.forcing
    if config.nonlinearity:
        out -= nonlinear_coeffs(a, config.spectrum, config.spectrum.grid)
    return out


def _stage_term(a: np.ndarray, config: SimulationConfig) -> np.ndarray:
    # non-stiff part only; the diagonal linear part lives in the exponentials
    if config.nonlinearity:
        return config.forcing - nonlinear_coeffs(a, config.spectrum, config.spectrum.grid)
    return config.forcing.copy()


def step_ifrk4(a: np.ndarray, t: float, dt: float, config: SimulationConfig) -> np.ndarray:
    if dt == 0.0:
        return a.copy()
    n = a.shape[0]
    e_full = _factors(config.profile, config.nu, dt, n)
    e_half = _factors(config.profile, config.nu, dt / 2.0, n)

    # overflow in the stages is diagnosed below, not by numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = _stage_term(a, config)
        k2 = _stage_term(e_half * (a + 0.5 * dt * k1), config)
        k3 = _stage_term(e_half * a + 0.5 * dt * k2, config)
        k4 = _stage_term(e_full * a + dt * e_half * k3, config)
        out = e_full * a + (dt / 6.0) * (e_full * k1 + 2.0 * e_half * (k2 + k3) + k4)
    if not np.all(np.isfinite(out)):
        raise BlowUpError(t + dt, a)
    return out


def _factors(profile: DissipationProfile, nu: float, dt: float, n: int) -> np.ndarray:
    return if_exponential(profile, nu, dt)[:n]


def simulate(config: SimulationConfig) -> Trajectory:
    n_steps = int(round(config.T / config.dt))
    if abs(n_steps * config.dt - config.T) > 1e-9 * config.T:
        raise ValueError("T must be an integer number of steps")
    if n_steps % config.sample_stride != 0:
        raise ValueError("sample_stride must divide the step count")
    a = config.initial.astype(float, copy=True)
    if not np.all(np.isfinite(a)):
        raise ValueError("initial data must be finite")
    times = [0.0]
    samples = [a.copy()]
    for k in range(n_steps):
        t = k * config.dt
        a = step_ifrk4(a, t, config.dt, config)
        if (k + 1) % config.sample_stride == 0:
            times.append((k + 1) * config.dt)
            samples.append(a.copy())
    return Trajectory(
        times=np.asarray(times), coeffs=np.asarray(samples), config=config
    )
