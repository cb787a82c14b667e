"""Brute-force verifier: the reservoir as N explicit oscillators.

The probe plus N bath modes form a quadratic system H = v^T Hm v / 2 with
v = (x, p, x_1..x_N, p_1..p_N).  The coupling is S sum_k c_k x_k with
S = x cos th + p sin th, and the counter-term is S^2 sum_k c_k^2 / (2 w_k^2).
Moments evolve exactly through the drift exp(A t), A = J Hm.  The drive
-F0 sin(w_f t) x is carried by two auxiliary coordinates that integrate
(sin, cos) alongside, so it also propagates through the same exponential.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .dynamics import MomentTrajectory
from .exceptions import DomainError, RecurrenceError, ToleranceError
from .model import ProbeSpec, ReservoirSpec, init_gaussian_state, spectral_density

RECURRENCE_FRACTION = 0.8


@dataclass(frozen=True)
class DiscretizedBath:
    omegas: np.ndarray
    couplings: np.ndarray

    @property
    def spacing(self) -> float:
        return float(self.omegas[1] - self.omegas[0])

    @property
    def recurrence_time(self) -> float:
        return 2.0 * math.pi / self.spacing

    @property
    def counter_term(self) -> float:
        """sum_k c_k^2 / w_k^2 (twice the coefficient of S^2 in H_c)."""
        return float(np.sum(self.couplings ** 2 / self.omegas ** 2))


@dataclass(frozen=True)
class FullGaussianState:
    mean: np.ndarray
    cov: np.ndarray


def discretize_bath(res: ReservoirSpec, N: int, omega_max: float) -> DiscretizedBath:
    """Midpoint rule on [0, omega_max] with c_k^2 = w_k J(w_k) dw."""
    if int(N) < 2:
        raise DomainError("need at least two bath modes")
    if not omega_max > 0:
        raise DomainError("omega_max must be > 0")
    dw = omega_max / N
    w = (np.arange(1, N + 1) - 0.5) * dw
    c = np.sqrt(w * spectral_density(w, res) * dw)
    return DiscretizedBath(w, c)


def default_mode_count(res: ReservoirSpec, t_max: float, omega_max: float | None = None,
                       minimum: int = 300) -> int:
    """Smallest N >= ``minimum`` keeping t_max inside the recurrence window."""
    omega_max = 20.0 * res.Omega if omega_max is None else omega_max
    need = math.ceil(t_max * omega_max / (2.0 * math.pi * RECURRENCE_FRACTION)) + 1
    return max(minimum, need)


def initial_full_state(probe: ProbeSpec, bath: DiscretizedBath,
                       temperature: float) -> FullGaussianState:
    """Probe state times the canonical bath state (product, no correlations)."""
    if not temperature > 0:
        raise DomainError("temperature must be > 0")
    n = bath.omegas.size
    w = bath.omegas
    coth = 1.0 / np.tanh(0.5 * w / temperature)
    p0 = init_gaussian_state(probe)
    mean = np.zeros(2 * n + 2)
    mean[:2] = p0.d
    cov = np.zeros((2 * n + 2, 2 * n + 2))
    cov[:2, :2] = p0.sigma
    idx = np.arange(n)
    cov[2 + idx, 2 + idx] = coth / w
    cov[2 + n + idx, 2 + n + idx] = w * coth
    return FullGaussianState(mean, cov)


def hamiltonian_matrix(probe: ProbeSpec, bath: DiscretizedBath) -> np.ndarray:
    n = bath.omegas.size
    c, s = math.cos(probe.theta), math.sin(probe.theta)
    kc = bath.counter_term
    H = np.zeros((2 * n + 2, 2 * n + 2))
    H[0, 0] = probe.omega0 ** 2 + kc * c * c
    H[1, 1] = 1.0 + kc * s * s
    H[0, 1] = H[1, 0] = kc * c * s
    xs = 2 + np.arange(n)
    H[0, xs] = H[xs, 0] = bath.couplings * c
    H[1, xs] = H[xs, 1] = bath.couplings * s
    H[xs, xs] = bath.omegas ** 2
    ps = 2 + n + np.arange(n)
    H[ps, ps] = 1.0
    return H


def symplectic_form(n: int) -> np.ndarray:
    """J in (x, p, x_1..x_n, p_1..p_n) ordering."""
    dim = 2 * n + 2
    J = np.zeros((dim, dim))
    J[0, 1], J[1, 0] = 1.0, -1.0
    k = np.arange(n)
    J[2 + k, 2 + n + k] = 1.0
    J[2 + n + k, 2 + k] = -1.0
    return J


def drift_matrix(probe: ProbeSpec, bath: DiscretizedBath) -> np.ndarray:
    return symplectic_form(bath.omegas.size) @ hamiltonian_matrix(probe, bath)


def evolve_full_system(state: FullGaussianState, probe: ProbeSpec, bath: DiscretizedBath,
                       times, check_recurrence: bool = True) -> MomentTrajectory:
    """Probe moments on a uniform time grid (must start at 0)."""
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size < 2 or t[0] != 0.0:
        raise DomainError("times must be a grid starting at 0")
    dt = t[1] - t[0]
    if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=0):
        raise DomainError("oracle needs a uniform time grid")
    if check_recurrence and t[-1] >= RECURRENCE_FRACTION * bath.recurrence_time:
        raise RecurrenceError(
            f"horizon {t[-1]:.3g} exceeds {RECURRENCE_FRACTION} x recurrence time "
            f"{bath.recurrence_time:.3g}; increase N")
    A = drift_matrix(probe, bath)
    dim = A.shape[0]
    drive = probe.drive if probe.driven else None
    if drive is not None:
        # u = sin(w_f t), v = cos(w_f t) appended to the state
        Aa = np.zeros((dim + 2, dim + 2))
        Aa[:dim, :dim] = A
        Aa[1, dim] = drive.F0
        Aa[dim, dim + 1] = drive.omega_f
        Aa[dim + 1, dim] = -drive.omega_f
        A = Aa
    step = expm(A * dt)
    # symplectic consistency of the bath-probe block: M J M^T = J
    M = step[:dim, :dim]
    Jd = symplectic_form(bath.omegas.size)
    resid = np.max(np.abs(M @ Jd @ M.T - Jd))
    if resid > 1e-8:
        raise ToleranceError(f"drift exponential not symplectic ({resid:.2e})", achieved=resid)

    mean0 = state.mean
    if drive is not None:
        mean0 = np.concatenate([mean0, [0.0, 1.0]])
    rows = np.zeros((2, A.shape[0]))
    rows[0, 0] = rows[1, 1] = 1.0
    cov0 = state.cov
    d = np.empty((t.size, 2))
    sigma = np.empty((t.size, 2, 2))
    for k in range(t.size):
        if k:
            rows = rows @ step
        R = rows[:, :dim]
        d[k] = rows @ mean0
        sigma[k] = R @ cov0 @ R.T
    sigma = 0.5 * (sigma + np.transpose(sigma, (0, 2, 1)))
    return MomentTrajectory(t, d, sigma, {"noise_backend": "oracle", "modes": bath.omegas.size})


def oracle_moments(probe: ProbeSpec, res: ReservoirSpec, times, N: int | None = None,
                   omega_max: float | None = None) -> MomentTrajectory:
    omega_max = 20.0 * res.Omega if omega_max is None else omega_max
    t = np.asarray(times, dtype=float)
    N = default_mode_count(res, float(t[-1]), omega_max) if N is None else N
    bath = discretize_bath(res, N, omega_max)
    return evolve_full_system(initial_full_state(probe, bath, res.temperature), probe, bath, t)


def max_relative_deviation(a: MomentTrajectory, b: MomentTrajectory) -> dict:
    """Pointwise relative error on diagonal covariances, sup-normalised on s_xp,
    absolute error on the displacement."""
    sa, sb = a.sigma, b.sigma
    out = {}
    for name, (i, j) in (("sxx", (0, 0)), ("spp", (1, 1))):
        out[name] = float(np.max(np.abs(sa[:, i, j] - sb[:, i, j]) / np.abs(sb[:, i, j])))
    scale = max(np.max(np.abs(sb[:, 0, 1])), 1e-300)
    out["sxp"] = float(np.max(np.abs(sa[:, 0, 1] - sb[:, 0, 1])) / scale)
    out["d"] = float(np.max(np.abs(a.d - b.d)))
    return out
