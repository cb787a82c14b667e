"""Green's functions G_1..G_6 of the probe from the characteristic cubic.

With Z~(z) = gamma Omega / (z + Omega) the Laplace-domain solution has the
common denominator zeta(z) (z + Omega), a cubic

    z^3 + Omega z^2 + [w0^2 + gamma Omega (cos^2 th + w0^2 sin^2 th)] z + w0^2 Omega

so every G_alpha(t) is a three-term exponential sum whose weights follow
from the residue theorem.  The exponential-sum form (roots ``z`` and the
6x3 weight table ``coeff``) is what the noise integrals and the drive
response consume.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import DomainError, UnstableParametersError
from .model import ProbeSpec, ReservoirSpec

DEGENERACY_TOL = 1e-4  # residue weights grow like 1/gap^2; keep them below ~1e8
DEGENERACY_SHIFT = 1e-9


@dataclass(frozen=True)
class CubicRoots:
    z: np.ndarray
    degenerate: bool


@dataclass(frozen=True)
class PropagatorSet:
    """Roots z_i and weights coeff[alpha, i] so that G_alpha(t) = sum_i coeff e^{z_i t}."""

    roots: CubicRoots
    coeff: np.ndarray
    theta: float

    @property
    def z(self) -> np.ndarray:
        return self.roots.z


def cubic_coefficients(probe: ProbeSpec, res: ReservoirSpec) -> np.ndarray:
    w0, Om, g, th = probe.omega0, res.Omega, res.gamma, probe.theta
    lin = w0 ** 2 + g * Om * (math.cos(th) ** 2 + w0 ** 2 * math.sin(th) ** 2)
    return np.array([1.0, Om, lin, w0 ** 2 * Om])


def _polish(coeffs, z, steps=2):
    dp = np.polyder(coeffs)
    for _ in range(steps):
        d = np.polyval(dp, z)
        ok = d != 0
        z = np.where(ok, z - np.polyval(coeffs, z) / np.where(ok, d, 1.0), z)
    return z


def _conjugate_closed(z):
    """Make the root set exactly closed under conjugation (real coefficients)."""
    scale = max(1.0, float(np.max(np.abs(z))))
    is_real = np.abs(z.imag) < 1e-12 * scale
    if is_real.sum() == 3:
        return np.sort(z.real).astype(complex)
    if is_real.sum() != 1:
        # two of them numerically real but the third not: keep the odd one real
        k = int(np.argmin(np.abs(z.imag)))
        is_real = np.zeros(3, bool)
        is_real[k] = True
    real_root = z[is_real][0].real
    pair = z[~is_real]
    zc = complex(0.5 * (pair[0].real + pair[1].real), 0.5 * (abs(pair[0].imag) + abs(pair[1].imag)))
    return np.array([real_root, zc, zc.conjugate()], dtype=complex)


def characteristic_roots(probe: ProbeSpec, res: ReservoirSpec) -> CubicRoots:
    """Roots of the characteristic cubic: companion eigenvalues + Newton polish."""
    coeffs = cubic_coefficients(probe, res)
    z = np.roots(coeffs).astype(complex)
    z = _conjugate_closed(_polish(coeffs, z))
    scale = max(1.0, float(np.max(np.abs(z))))
    gaps = [abs(z[i] - z[j]) for i in range(3) for j in range(i + 1, 3)]
    return CubicRoots(z=z, degenerate=min(gaps) < DEGENERACY_TOL * scale)


def numerator_polynomials(probe: ProbeSpec, res: ReservoirSpec,
                          literal_g6: bool = False) -> list[np.ndarray]:
    """G_alpha(z) (Laplace numerators times (z + Omega)), highest power first.

    ``literal_g6`` switches G_6 to -(z + Omega)(w0 sin th + z cos th); the
    default uses w0^2 sin th, matching the Laplace image of the p-noise kernel.
    """
    w0, Om, g = probe.omega0, res.Omega, res.gamma
    c, s = math.cos(probe.theta), math.sin(probe.theta)
    gO = g * Om
    p_zo = np.array([1.0, Om])  # z + Omega
    g1 = np.array([1.0, Om + gO * c * s, 0.0])
    g2 = np.array([0.0, 1.0 + gO * s * s, Om])
    g3 = np.polymul(p_zo, [s, -c])
    g4 = np.array([0.0, -w0 ** 2 - gO * c * c, -w0 ** 2 * Om])
    g5 = np.array([1.0, Om - gO * c * s, 0.0])
    sin_coef = w0 if literal_g6 else w0 ** 2
    g6 = -np.polymul(p_zo, [c, sin_coef * s])
    return [np.pad(p, (3 - len(p), 0)) for p in (g1, g2, g3, g4, g5, g6)]


def residue_weights(z: np.ndarray, polys) -> np.ndarray:
    """coeff[alpha, i] = G_alpha(z_i) / prod_{j != i} (z_i - z_j)."""
    denom = np.array([np.prod([z[i] - z[j] for j in range(len(z)) if j != i])
                      for i in range(len(z))])
    return np.array([np.polyval(p, z) / denom for p in polys])


def build_propagators(probe: ProbeSpec, res: ReservoirSpec,
                      literal_g6: bool = False) -> PropagatorSet:
    roots = characteristic_roots(probe, res)
    if roots.degenerate:
        warnings.warn("near-degenerate characteristic roots; perturbing Omega by 1e-9",
                      RuntimeWarning, stacklevel=2)
        res = replace(res, Omega=res.Omega * (1.0 + DEGENERACY_SHIFT))
        roots = characteristic_roots(probe, res)
    if np.any(roots.z.real >= 0):
        raise UnstableParametersError(f"characteristic root with Re z >= 0: {roots.z}")
    polys = numerator_polynomials(probe, res, literal_g6=literal_g6)
    return PropagatorSet(roots=roots, coeff=residue_weights(roots.z, polys),
                         theta=probe.theta)


def eval_exponential_sum(coeff: np.ndarray, z: np.ndarray, t, check: bool = True):
    """Real part of sum_i coeff[..., i] exp(z_i t) for every t (last axis)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    vals = coeff @ np.exp(np.outer(z, t))
    if check:
        scale = max(1.0, float(np.max(np.abs(coeff))))
        if np.max(np.abs(vals.imag), initial=0.0) > 1e-10 * scale:
            raise ArithmeticError("propagators acquired an imaginary part")
    return vals.real


def eval_propagators(pset: PropagatorSet, t) -> np.ndarray:
    """(G_1, ..., G_6) at time(s) t; shape (6,) for scalar t, else (6, nt)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError("propagators are defined for t >= 0")
    out = eval_exponential_sum(pset.coeff, pset.z, t_arr)
    return out[:, 0] if t_arr.ndim == 0 else out


def markovian_rates(probe: ProbeSpec, res: ReservoirSpec) -> tuple[float, complex]:
    """kappa = gamma/2 and Lambda = sqrt(w0^2 - kappa^2) (imaginary when overdamped)."""
    kappa = 0.5 * res.gamma
    lam = complex(np.sqrt(complex(probe.omega0 ** 2 - kappa ** 2)))
    return kappa, lam


def markovian_exponential_sum(probe: ProbeSpec, res: ReservoirSpec,
                              allow_overdamped: bool = True):
    """Markovian kernels as exponential sums over lambda_pm = -kappa +- i Lambda.

    Returns (rates, coeff) with coeff shaped (6, 2).  The overdamped regime is
    the analytic continuation (Lambda imaginary); the critical point is
    shifted by a relative 1e-9 in kappa.
    """
    if probe.theta != 0.0:
        raise DomainError("Markovian kernels are only available for theta = 0")
    kappa, lam = markovian_rates(probe, res)
    if kappa >= probe.omega0 and not allow_overdamped:
        raise DomainError("overdamped Markovian regime (kappa >= omega0) unsupported")
    if abs(lam) < 1e-7 * probe.omega0:
        warnings.warn("critically damped Markovian kernels; shifting kappa by 1e-9",
                      RuntimeWarning, stacklevel=2)
        kappa *= 1.0 + DEGENERACY_SHIFT
        lam = complex(np.sqrt(complex(probe.omega0 ** 2 - kappa ** 2)))
    lp, lm = -kappa + 1j * lam, -kappa - 1j * lam
    dl = lp - lm
    w2 = probe.omega0 ** 2
    g2 = np.array([1.0, -1.0]) / dl                 # sin(Lt) e^{-kt} / L
    g1 = np.array([-lm, lp]) / dl                   # [k/L sin + cos] e^{-kt}
    g5 = np.array([lp, -lm]) / dl                   # [cos - k/L sin] e^{-kt}
    coeff = np.array([g1, g2, -g2, -w2 * g2, g5, -g5])
    return np.array([lp, lm]), coeff


def markovian_propagators(probe: ProbeSpec, res: ReservoirSpec, t,
                          allow_overdamped: bool = False) -> np.ndarray:
    """Markovian approximants of (G_1..G_6) at theta = 0."""
    rates, coeff = markovian_exponential_sum(probe, res, allow_overdamped=allow_overdamped)
    t_arr = np.asarray(t, dtype=float)
    out = eval_exponential_sum(coeff, rates, t_arr)
    return out[:, 0] if t_arr.ndim == 0 else out
