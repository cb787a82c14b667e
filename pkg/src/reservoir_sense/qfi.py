"""Quantum Fisher information of the Gaussian probe state.

F = 1/2 vec(ds)^T M^+ vec(ds) + 2 dd^T s^-1 dd,   M = s (x) s - w (x) w,

with w the 2x2 symplectic form and parameter derivatives from a five-point
stencil.  The parameter is either the coupling ``gamma`` or the cutoff
``Omega`` of the reservoir.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import ExactMoments, MarkovMoments
from .exceptions import DomainError, IllConditionedError
from .model import GaussianState, ProbeSpec, ReservoirSpec, SimGrid, inverse_state_params

log = logging.getLogger(__name__)

TARGETS = ("gamma", "Omega")
DELTA_REL = 1e-6
PINV_RTOL = 1e-10
RANGE_TOL = 1e-6
CLIP_TOL = 1e-9
PHYSICAL_TOL = 1e-9
_W = np.array([[0.0, 1.0], [-1.0, 0.0]])
_OFFSETS = (-2, -1, 1, 2)


def _stencil(v, delta):
    """Five-point derivative from values at lambda - 2d, -d, +d, +2d.  Written as
    paired differences so a parameter-independent quantity gives exactly 0."""
    return (8.0 * (v[2] - v[1]) - (v[3] - v[0])) / (12.0 * delta)


def qfi_metric(sigma: np.ndarray) -> np.ndarray:
    """M = sigma (x) sigma - w (x) w (symmetric 4x4)."""
    return np.kron(sigma, sigma) - np.kron(_W, _W)


def gaussian_qfi(state: GaussianState, d_deriv, sigma_deriv,
                 displacement_only_fallback: bool = False) -> float:
    """QFI of a single-mode Gaussian state for given parameter derivatives."""
    sigma = state.sigma
    dd = np.asarray(d_deriv, dtype=float).reshape(2)
    ds = np.asarray(sigma_deriv, dtype=float).reshape(2, 2)
    if np.any(np.linalg.eigvalsh(sigma) <= 0):
        raise DomainError("covariance must be positive definite")
    disp = 2.0 * float(dd @ np.linalg.solve(sigma, dd))
    # F is invariant under symplectic maps.  Mapping sigma to its Williamson
    # form nu * I keeps M well scaled for strongly squeezed, rotated states:
    # (sigma / nu)^(-1/2) is symmetric with unit determinant, hence symplectic.
    lam, V = np.linalg.eigh(sigma)
    nu = math.sqrt(lam[0] * lam[1])
    S = (V / np.sqrt(lam / nu)) @ V.T
    sigma = S @ sigma @ S
    sigma = 0.5 * (sigma + sigma.T)
    ds = S @ ds @ S
    v = ds.reshape(4)  # row-major vec; M is symmetric under both conventions here
    if not np.any(v):
        return disp
    M = qfi_metric(sigma)
    evals, evecs = np.linalg.eigh(M)
    keep = evals > PINV_RTOL * np.max(np.abs(evals))
    coords = evecs.T @ v
    outside = np.linalg.norm(coords[~keep])
    if outside > RANGE_TOL * np.linalg.norm(v):
        if displacement_only_fallback:
            warnings.warn("covariance derivative outside the metric range; "
                          "keeping the displacement term only", RuntimeWarning, stacklevel=2)
            return disp
        raise IllConditionedError(
            f"pure-state-limit ill-conditioning: |out-of-range part| = {outside:.3e}")
    cov = 0.5 * float(np.sum(coords[keep] ** 2 / evals[keep]))
    return cov + disp


def finite_difference(f, lam: float, delta_rel: float = DELTA_REL, domain=None):
    """Five-point central derivative of ``f`` at ``lam`` with step delta_rel * lam."""
    if lam == 0:
        raise DomainError("relative stencil needs lambda != 0")
    delta = delta_rel * lam
    points = [lam + k * delta for k in _OFFSETS]
    if domain is not None and not all(domain(p) for p in points):
        raise DomainError("stencil leaves the parameter domain")
    vals = [np.asarray(f(p), dtype=float) for p in points]
    return _stencil(vals, delta)


def cramer_rao_bound(F: float, nu: int = 1) -> float:
    """Smallest achievable variance 1 / (nu F)."""
    if not F > 0:
        raise DomainError("Cramer-Rao bound needs F > 0")
    if int(nu) < 1:
        raise DomainError("number of repetitions must be >= 1")
    return 1.0 / (int(nu) * F)


def _perturb(res: ReservoirSpec, target: str, value: float) -> ReservoirSpec:
    if target not in TARGETS:
        raise DomainError(f"target must be one of {TARGETS}, got {target!r}")
    return replace(res, **{target: value})


@dataclass(frozen=True)
class QfiCurve:
    times: np.ndarray
    F_values: np.ndarray
    target: str
    stencil_delta: float
    meta: dict = field(default_factory=dict)

    def local_maxima(self) -> list[int]:
        F = self.F_values
        return [k for k in range(1, F.size - 1) if F[k] > F[k - 1] and F[k] >= F[k + 1]]


class QfiEvaluator:
    """F(t) for one target; holds the five moment evaluators of the stencil."""

    def __init__(self, probe: ProbeSpec, res: ReservoirSpec, target: str = "gamma",
                 delta_rel: float = DELTA_REL, pipeline: str = "exact",
                 displacement_only_fallback: bool = False, **moment_kw):
        lam = getattr(res, target) if target in TARGETS else None
        if lam is None:
            raise DomainError(f"target must be one of {TARGETS}, got {target!r}")
        self.probe, self.res, self.target = probe, res, target
        self.delta_rel = delta_rel
        self.delta = delta_rel * lam
        self.pipeline = pipeline
        self.fallback = displacement_only_fallback
        if pipeline == "exact":
            make = lambda r: ExactMoments(probe, r, **moment_kw)  # noqa: E731
        elif pipeline == "markov":
            make = lambda r: MarkovMoments(probe, r, **moment_kw)  # noqa: E731
        else:
            raise DomainError(f"unknown pipeline {pipeline!r}")
        if lam - 2 * self.delta <= 0:
            raise DomainError("stencil leaves the parameter domain")
        self.center = make(res)
        self.shifted = [make(_perturb(res, target, lam + k * self.delta)) for k in _OFFSETS]

    @property
    def meta(self) -> dict:
        meta = {"pipeline": self.pipeline, "target": self.target, "delta_rel": self.delta_rel}
        meta.update(getattr(self.center, "meta", {}) or {})
        return meta

    def _derivs(self, trajs):
        dd = _stencil([tr.d for tr in trajs], self.delta)
        ds = _stencil([tr.sigma for tr in trajs], self.delta)
        return dd, 0.5 * (ds + np.transpose(ds, (0, 2, 1)))

    def _combine(self, center, dd, ds):
        out = np.empty(len(center.times))
        for k in range(out.size):
            if center.times[k] == 0.0:
                out[k] = 0.0  # the initial state carries no reservoir information
                continue
            state = center.state(k)
            if self.pipeline == "markov" and not state.is_physical(PHYSICAL_TOL):
                # delta-correlated noise can break the uncertainty bound at
                # short times; the QFI is undefined for such a "state"
                out[k] = np.nan
                continue
            out[k] = gaussian_qfi(state, dd[k], ds[k],
                                  displacement_only_fallback=self.fallback)
        if np.isnan(out).any():
            log.warning("%d unphysical Markovian covariances (det < 1); QFI set to NaN",
                        int(np.isnan(out).sum()))
        return _clip(out)

    def values(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        center = self.center.evaluate(t)
        dd, ds = self._derivs([m.evaluate(t) for m in self.shifted])
        return self._combine(center, dd, ds)

    def curve(self, times) -> QfiCurve:
        t = np.asarray(times, dtype=float)
        return QfiCurve(t, self.values(t), self.target, self.delta_rel, self.meta)

    def steady_state(self) -> float:
        """F at t -> inf from the closed-form stationary moments."""
        states = [m.steady_state() for m in self.shifted]
        ds = _stencil([s.sigma for s in states], self.delta)
        ds = 0.5 * (ds + ds.T)
        center = self.center.steady_state()
        return float(_clip(np.array([gaussian_qfi(center, np.zeros(2), ds,
                                                   displacement_only_fallback=self.fallback)]))[0])


def _clip(F: np.ndarray) -> np.ndarray:
    neg = F < 0
    if np.any(neg):
        worst = float(np.nanmin(F))
        if worst < -CLIP_TOL * max(1.0, float(np.nanmax(np.abs(F)))):
            raise ArithmeticError(f"QFI came out negative ({worst:.3e})")
        log.warning("clipping %d slightly negative QFI values (min %.2e)", int(neg.sum()), worst)
        F = np.where(neg, 0.0, F)
    return F


def qfi_trajectory(probe: ProbeSpec, res: ReservoirSpec, target: str, grid: SimGrid,
                   delta_rel: float = DELTA_REL, pipeline: str = "exact", **kw) -> QfiCurve:
    return QfiEvaluator(probe, res, target, delta_rel, pipeline, **kw).curve(grid.times)


@dataclass(frozen=True)
class QfiMaximum:
    t_star: float
    F_star: float
    local_maxima: tuple = ()
    on_boundary: bool = False


_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(f, a: float, b: float, rtol: float = 1e-4, max_iter: int = 60):
    """Maximise a unimodal scalar f on [a, b]; returns (x, f(x))."""
    c, d = b - _GOLD * (b - a), a + _GOLD * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLD * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLD * (b - a)
            fd = f(d)
        if abs(fc - fd) <= rtol * 0.01 * max(abs(fc), abs(fd)) and (b - a) < 1e-6 * max(1.0, b):
            break
        if (b - a) < 1e-9 * max(1.0, b):
            break
    return (c, fc) if fc >= fd else (d, fd)


def max_qfi(curve: QfiCurve, evaluate=None, rtol: float = 1e-4) -> QfiMaximum:
    """Global maximum over the grid, refined by golden section when ``evaluate``
    (t -> F) is given.  The refined value never drops below the grid maximum."""
    F, t = curve.F_values, curve.times
    if F.size == 0:
        raise DomainError("empty QFI curve")
    if np.all(np.isnan(F)):
        raise DomainError("QFI curve has no defined values")
    k = int(np.nanargmax(F))
    t_star, F_star = float(t[k]), float(F[k])
    on_boundary = k == F.size - 1
    if on_boundary:
        warnings.warn("QFI maximum sits on the last grid point: horizon too short",
                      RuntimeWarning, stacklevel=2)
    elif evaluate is not None and 0 < k:
        ts, fs = golden_section_max(lambda x: float(evaluate(x)), float(t[k - 1]),
                                    float(t[k + 1]), rtol=rtol)
        if fs > F_star:
            t_star, F_star = ts, fs
    return QfiMaximum(t_star, F_star, tuple(float(t[i]) for i in curve.local_maxima()),
                      on_boundary)


def maximize(evaluator: QfiEvaluator, times) -> tuple[QfiCurve, QfiMaximum]:
    curve = evaluator.curve(times)
    best = max_qfi(curve, evaluate=lambda x: evaluator.values(np.array([x]))[0])
    return curve, best


def theta_sweep(probe: ProbeSpec, res: ReservoirSpec, target: str, thetas, times, **kw):
    """max_t F for every coupling angle; returns (thetas, maxima, theta_star)."""
    thetas = np.asarray(thetas, dtype=float)
    if np.any(thetas < 0) or np.any(thetas > math.pi):
        raise DomainError("theta grid must lie in [0, pi]")
    best = [maximize(QfiEvaluator(replace(probe, theta=float(th)), res, target, **kw), times)[1]
            for th in thetas]
    F = np.array([b.F_star for b in best])
    return thetas, best, float(thetas[int(np.argmax(F))])


@dataclass(frozen=True)
class ScalingFit:
    zeta: float
    n_bar: np.ndarray
    max_F: np.ndarray
    t_star: np.ndarray
    slope: float
    intercept: float
    r_squared: float


def linear_fit(x, y) -> tuple[float, float, float]:
    """Least-squares line; returns (slope, intercept, R^2)."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def scaling_scan(probe: ProbeSpec, res: ReservoirSpec, target: str, n_bars, zetas, times,
                 **kw) -> list[ScalingFit]:
    """max_t F against the resource count n_bar for each squeezing ratio zeta
    (results in increasing zeta order)."""
    n_bars = np.asarray(n_bars, dtype=float)
    fits = []
    for zeta in sorted(float(z) for z in zetas):
        Fs, ts = [], []
        for nb in n_bars:
            alpha, r = inverse_state_params(float(nb), zeta)
            ev = QfiEvaluator(replace(probe, alpha=alpha, r=r), res, target, **kw)
            best = maximize(ev, times)[1]
            Fs.append(best.F_star)
            ts.append(best.t_star)
        slope, icpt, r2 = linear_fit(n_bars, Fs)
        fits.append(ScalingFit(zeta, n_bars, np.array(Fs), np.array(ts), slope, icpt, r2))
    return fits


def delta_qfi(probe: ProbeSpec, res: ReservoirSpec, target: str, drive, times, **kw) -> float:
    """max_t F with the drive minus max_t F without it."""
    if drive is None or drive.F0 == 0.0:
        return 0.0
    driven = maximize(QfiEvaluator(replace(probe, drive=drive), res, target, **kw), times)[1]
    bare = maximize(QfiEvaluator(replace(probe, drive=None), res, target, **kw), times)[1]
    return driven.F_star - bare.F_star
