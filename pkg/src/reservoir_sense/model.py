"""Parameter types, spectral density and bath kernels of the probe model.

Units: everything is expressed in units of the probe frequency scale
(hbar = k_B = m = 1).  Times are in 1/omega0, frequencies and temperatures
in omega0.

Bath normalisation.  With the Lorentz-Drude density
J(w) = (2 gamma w / pi) Omega^2 / (w^2 + Omega^2) the friction kernel and the
symmetrised noise correlation used throughout the package are

    Z(t) = int_0^inf J(w)/w cos(w t) dw     = gamma Omega exp(-Omega t)
    C(t) = 1/2 int_0^inf J(w) coth(beta w / 2) cos(w t) dw

which is the fluctuation-dissipation consistent pair for a bath of
oscillators with couplings c_k^2 = w_k J(w_k) dw (see ``oracle``).  The
Markovian limit of this pair is C(s) ~ 2 gamma T delta(s) with amplitude
decay rate gamma / 2.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import exp1

from .exceptions import DomainError, ResonanceError
from .special import lerch_phi1

RESONANCE_EPS = 1e-6
LERCH_T_MIN = 1e-8
MIN_TEMPERATURE = 0.01
MATSUBARA_RTOL = 1e-8
MATSUBARA_CAP = 100_000


@dataclass(frozen=True)
class ReservoirSpec:
    """Lorentz-Drude reservoir: coupling ``gamma``, cutoff ``Omega``, temperature."""

    gamma: float
    Omega: float
    temperature: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError(f"gamma must be > 0, got {self.gamma}")
        if not self.Omega > 0:
            raise DomainError(f"Omega must be > 0, got {self.Omega}")
        if not self.temperature >= MIN_TEMPERATURE:
            raise DomainError(
                f"temperature must be >= {MIN_TEMPERATURE} (zero-temperature "
                f"branch not supported), got {self.temperature}")

    @property
    def beta(self) -> float:
        return 1.0 / self.temperature

    @property
    def matsubara_step(self) -> float:
        """Spacing 2 pi T of the Matsubara frequencies."""
        return 2.0 * math.pi * self.temperature

    @property
    def resonance_ratio(self) -> float:
        """beta Omega / (2 pi); integer values are Matsubara resonances."""
        return self.Omega / self.matsubara_step

    def resonant_index(self) -> int | None:
        a = self.resonance_ratio
        n = round(a)
        if n >= 1 and abs(a - n) < RESONANCE_EPS * n:
            return int(n)
        return None


@dataclass(frozen=True)
class Drive:
    F0: float
    omega_f: float

    def __post_init__(self):
        if self.F0 < 0:
            raise DomainError("drive amplitude F0 must be >= 0")
        if not self.omega_f > 0:
            raise DomainError("drive frequency omega_f must be > 0")


@dataclass(frozen=True)
class ProbeSpec:
    """Harmonic probe: frequency, coupling angle, initial state and drive."""

    omega0: float = 1.0
    theta: float = 0.0
    alpha: complex = 0.0
    r: float = 0.0
    drive: Drive | None = None

    def __post_init__(self):
        if not self.omega0 > 0:
            raise DomainError("omega0 must be > 0")
        if not (0.0 <= self.theta <= math.pi):
            raise DomainError(f"theta must lie in [0, pi], got {self.theta}")

    @property
    def driven(self) -> bool:
        return self.drive is not None and self.drive.F0 > 0


@dataclass(frozen=True)
class GaussianState:
    """Displacement ``d`` = (<x>, <p>) and covariance sigma_ij = <{dQ_i, dQ_j}>."""

    d: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float).reshape(2)
        s = np.asarray(self.sigma, dtype=float).reshape(2, 2)
        if abs(s[0, 1] - s[1, 0]) > 1e-12 * max(1.0, np.abs(s).max()):
            raise DomainError("covariance must be symmetric")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "sigma", s)

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.sigma))

    def is_physical(self, tol: float = 1e-6) -> bool:
        s = self.sigma
        return bool(s[0, 0] > 0 and s[1, 1] > 0 and self.det >= 1.0 - tol)


@dataclass(frozen=True)
class SimGrid:
    t_max: float
    n_points: int
    spacing: str = "uniform"
    times: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.t_max > 0:
            raise DomainError("t_max must be > 0")
        if int(self.n_points) < 2:
            raise DomainError("n_points must be > 1")
        if self.spacing == "uniform":
            t = np.linspace(0.0, self.t_max, int(self.n_points))
        elif self.spacing == "log":
            t = np.concatenate(
                [[0.0], np.geomspace(self.t_max * 1e-3, self.t_max, int(self.n_points) - 1)])
        else:
            raise DomainError(f"unknown spacing {self.spacing!r}")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)


def spectral_density(omega, res: ReservoirSpec):
    """J(w) = (2 gamma w / pi) Omega^2 / (w^2 + Omega^2)."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise DomainError("spectral density needs omega >= 0")
    out = 2.0 * res.gamma * w / math.pi * res.Omega ** 2 / (w ** 2 + res.Omega ** 2)
    return float(out) if out.ndim == 0 else out


def damping_kernel(t, res: ReservoirSpec):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("damping kernel needs t >= 0")
    out = res.gamma * res.Omega * np.exp(-res.Omega * t)
    return float(out) if out.ndim == 0 else out


def cutoff_coefficient(res: ReservoirSpec) -> float:
    """Weight of exp(-Omega |s|) in C(s) after summing all Matsubara terms."""
    if res.resonant_index() is not None:
        raise ResonanceError(
            f"beta*Omega/2pi = {res.resonance_ratio} is a Matsubara resonance")
    return 0.5 * res.gamma * res.Omega ** 2 / math.tan(0.5 * res.beta * res.Omega)


def _lerch_part(t, res: ReservoirSpec):
    a = res.resonance_ratio
    q = np.exp(-res.matsubara_step * t)
    phi = lerch_phi1(q, 1.0 - a).real + lerch_phi1(q, 1.0 + a).real
    return res.gamma * res.Omega ** 2 / (2.0 * math.pi) * q * phi


def correlation_lerch(t, res: ReservoirSpec):
    """Closed form of C(t) without the small-t guard (t > 0)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return cutoff_coefficient(res) * np.exp(-res.Omega * t) + _lerch_part(t, res)


def _matsubara_terms(t, res: ReservoirSpec, n: np.ndarray):
    """(nu e^{-nu t} - Omega e^{-Omega t}) / (nu^2 - Omega^2), resonance-regularised."""
    Om = res.Omega
    nu = res.matsubara_step * n
    tt = t[:, None]
    denom = nu ** 2 - Om ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = (nu * np.exp(-nu * tt) - Om * np.exp(-Om * tt)) / denom
    k = res.resonant_index()
    if k is not None and n[0] <= k <= n[-1]:
        warnings.warn(f"Matsubara resonance at n={k}; using the analytic limit",
                      RuntimeWarning, stacklevel=3)
        vals[:, k - int(n[0])] = (1.0 - Om * t) * np.exp(-Om * t) / (2.0 * Om)
    return vals


def matsubara_prefactor(res: ReservoirSpec) -> float:
    return res.gamma * res.Omega ** 2 / res.beta


def correlation_matsubara(t, res: ReservoirSpec, n_terms: int):
    """Truncated Matsubara series of C(t) with ``n_terms`` thermal poles."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    head = res.gamma * res.Omega / res.beta * np.exp(-res.Omega * t)
    if n_terms == 0:
        return head
    acc = np.zeros_like(t)
    # chunks keep memory bounded for N ~ 1e5
    for start in range(1, n_terms + 1, 4096):
        n = np.arange(start, min(n_terms, start + 4095) + 1, dtype=float)
        acc += _matsubara_terms(t, res, n).sum(axis=1)
    return head + 2.0 * matsubara_prefactor(res) * acc


def matsubara_tail_bound(t, res: ReservoirSpec, n_terms: int):
    """Upper bound on |C(t) - C_N(t)| for the truncated Matsubara series."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    kappa = res.matsubara_step
    Om = res.Omega
    pref = 2.0 * matsubara_prefactor(res)
    # explicit bound for terms where nu^2 < 2 Omega^2 does not hold yet
    n_safe = max(n_terms, int(math.ceil(math.sqrt(2.0) * Om / kappa)))
    bound = np.zeros_like(t)
    if n_safe > n_terms:
        n = np.arange(n_terms + 1, n_safe + 1, dtype=float)
        nu = kappa * n
        bound += np.sum((nu * np.exp(-nu * t[:, None]) + Om * np.exp(-Om * t[:, None]))
                        / np.abs(nu ** 2 - Om ** 2), axis=1)
    with np.errstate(divide="ignore"):
        tail_exp = np.where(t > 0, 2.0 / kappa * exp1(np.maximum(kappa * n_safe * t, 1e-300)),
                            np.inf)
    bound += 2.0 * Om * np.exp(-Om * t) / (kappa ** 2 * n_safe) + tail_exp
    return pref * bound


def _running_integral_matsubara(t, res: ReservoirSpec, n_terms: int):
    """int_0^t C_N(s) ds for the truncated series (scale for the adaptive N)."""
    Om = res.Omega
    out = res.gamma / res.beta * (1.0 - np.exp(-Om * t))
    if n_terms:
        nu = res.matsubara_step * np.arange(1, n_terms + 1, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = (np.exp(-Om * t[:, None]) - np.exp(-nu * t[:, None])) / (nu ** 2 - Om ** 2)
        out = out + 2.0 * matsubara_prefactor(res) * np.nansum(terms, axis=1)
    return out


def adaptive_matsubara_terms(t, res: ReservoirSpec, rtol: float = MATSUBARA_RTOL) -> int:
    """Smallest N (doubling search) whose tail bound is below ``rtol`` times
    the running integral of C; capped at 1e5 with a warning."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    scale = np.maximum(np.abs(_running_integral_matsubara(t, res, 16)),
                       np.abs(correlation_matsubara(t, res, 16)))
    n = 16
    while n < MATSUBARA_CAP:
        if np.all(matsubara_tail_bound(t, res, n) < rtol * scale):
            return n
        n *= 2
    warnings.warn("Matsubara truncation hit the cap N=1e5", RuntimeWarning, stacklevel=2)
    return MATSUBARA_CAP


def correlation_function(t, res: ReservoirSpec, backend: str = "lerch",
                         n_matsubara: int | None = None):
    """Symmetrised bath correlation C(t).

    backend ``"lerch"`` evaluates the closed form (t > 1e-8 required; C has a
    logarithmic singularity at 0).  backend ``"matsubara"`` sums
    ``n_matsubara`` thermal poles (adaptive when None) and accepts t >= 0.
    """
    t_arr = np.asarray(t, dtype=float)
    scalar = t_arr.ndim == 0
    t_arr = np.atleast_1d(t_arr)
    if backend == "lerch":
        if np.any(t_arr <= LERCH_T_MIN):
            raise DomainError("lerch backend refuses t <= 1e-8 (log singularity)")
        out = correlation_lerch(t_arr, res)
    elif backend == "matsubara":
        if np.any(t_arr < 0):
            raise DomainError("correlation function needs t >= 0")
        if n_matsubara is None:
            positive = t_arr[t_arr > 0]
            n_matsubara = adaptive_matsubara_terms(positive, res) if positive.size else 0
        out = correlation_matsubara(t_arr, res, int(n_matsubara))
    else:
        raise DomainError(f"unknown correlation backend {backend!r}")
    return float(out[0]) if scalar else out


def init_gaussian_state(probe: ProbeSpec) -> GaussianState:
    """Moments of S(r) D(alpha)|0> with a = (x + i p)/sqrt(2)."""
    a = complex(probe.alpha)
    r = probe.r
    d = np.array([math.sqrt(2.0) * a.real * math.exp(-r),
                  math.sqrt(2.0) * a.imag * math.exp(r)])
    sigma = np.diag([math.exp(-2.0 * r), math.exp(2.0 * r)])
    return GaussianState(d, sigma)


def resource_count(probe: ProbeSpec) -> tuple[float, float]:
    """Mean photon number n_bar = |alpha|^2 + sinh^2 r and squeezing ratio zeta."""
    squeeze = math.sinh(probe.r) ** 2
    n_bar = abs(complex(probe.alpha)) ** 2 + squeeze
    zeta = squeeze / n_bar if n_bar > 0 else 0.0
    return n_bar, zeta


def inverse_state_params(n_bar: float, zeta: float) -> tuple[float, float]:
    """(alpha, r) with real alpha >= 0 reproducing (n_bar, zeta)."""
    if n_bar < 0 or not (0.0 <= zeta <= 1.0):
        raise DomainError("need n_bar >= 0 and zeta in [0, 1]")
    r = math.asinh(math.sqrt(zeta * n_bar))
    alpha = math.sqrt((1.0 - zeta) * n_bar)
    return alpha, r
