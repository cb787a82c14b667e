"""Exact first and second moments of the probe.

    d_x = G1 d_x(0) + G2 d_p(0) + drive,      d_p = G4 d_x(0) + G5 d_p(0) + drive
    s_xx = G1^2 s_xx(0) + G2^2 s_pp(0) + 2 G1 G2 s_xp(0) + I_33
    s_pp = G4^2 s_xx(0) + G5^2 s_pp(0) + 2 G4 G5 s_xp(0) + I_66
    s_xp = G1 G4 s_xx(0) + G2 G5 s_pp(0) + (G1 G5 + G2 G4) s_xp(0) + I_36

with noise integrals I_ab(t) = 2 int_0^t int_0^t G_a(s) G_b(s') C(s - s') ds ds'.

Noise integrals ("expsum" backend).  With G_a = sum_i g_ai exp(z_i s),
I_ab = 2 sum_ij g_ai g_bj F_ij where F_ij is the double integral of
exp(z_i s + z_j s') C(|s - s'|).  A single exponential exp(-mu |u|)
contributes

    D(x, y, mu) = E[x+y, x-mu] + E[x+y, y-mu],    E(w) = (e^{w t} - 1) / w

(square brackets are divided differences).  C consists of the cutoff pole
exp(-Omega |u|) plus the Matsubara poles exp(-nu_n |u|) with weights
b_n = B nu_n / (nu_n^2 - Omega^2).  The Matsubara series is summed in closed
form by partial fractions, giving digamma functions (constant parts) and
Lerch transcendents (parts carrying exp(-nu_n t)).  As t -> inf the Lerch
parts vanish and E(w) -> -1/w, which yields the steady state exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate
from scipy.special import psi

from .exceptions import DomainError, ToleranceError
from .model import (GaussianState, ProbeSpec, ReservoirSpec, SimGrid, correlation_lerch,
                    cutoff_coefficient, init_gaussian_state)
from .propagators import (PropagatorSet, build_propagators, eval_exponential_sum,
                          markovian_exponential_sum)
from .special import lerch_phi1

PAIRS = ((2, 2), (5, 5), (2, 5))  # (G3, G3), (G6, G6), (G3, G6), zero-based
NEAR_POLE = 1e-6
T_SHIFT = 1e-5
QUAD_TOL = 1e-8
_SERIES_TERMS = 40


# -- elementary integrals -------------------------------------------------

def _moment_integral(k, m, t):
    """P_k(m, t) = int_0^t u^k exp(m u) du, elementwise (m complex)."""
    m, t = np.broadcast_arrays(np.asarray(m, dtype=complex), np.asarray(t, dtype=float))
    mt = m * t
    small = np.abs(mt) < 2.0
    out = np.empty(m.shape, dtype=complex)
    if np.any(small):
        ms, ts = mt[small], t[small]
        acc = np.zeros(ms.shape, dtype=complex)
        term = np.ones(ms.shape, dtype=complex)
        for n in range(_SERIES_TERMS):
            acc += term / (n + k + 1)
            term = term * ms / (n + 1)
        out[small] = acc * ts ** (k + 1)
    big = ~small
    if np.any(big):
        mb, tb = m[big], t[big]
        e = np.exp(mb * tb)
        val = (e - 1.0) / mb
        for j in range(1, k + 1):
            val = (tb ** j * e - j * val) / mb
        out[big] = val
    return out


def expint_e(w, t):
    """E(w) = (exp(w t) - 1) / w with E(0) = t; t may be inf (needs Re w < 0)."""
    w, t = np.broadcast_arrays(np.asarray(w, dtype=complex), np.asarray(t, dtype=float))
    out = np.empty(w.shape, dtype=complex)
    inf = np.isinf(t)
    out[inf] = -1.0 / w[inf]
    out[~inf] = _moment_integral(0, w[~inf], t[~inf])
    return out


def divided_difference_e(a, b, t):
    """(E(a) - E(b)) / (a - b), stable when a ~ b."""
    a, b, t = np.broadcast_arrays(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex),
                                  np.asarray(t, dtype=float))
    out = np.empty(a.shape, dtype=complex)
    inf = np.isinf(t)
    out[inf] = 1.0 / (a[inf] * b[inf])
    h = a - b
    close = (np.abs(h) * t < 0.1) & ~inf
    far = ~close & ~inf
    if np.any(far):
        out[far] = (expint_e(a[far], t[far]) - expint_e(b[far], t[far])) / h[far]
    if np.any(close):
        # int_0^t e^{m u} sinh(h u / 2) / (h / 2) du expanded in h
        m, hc, tc = 0.5 * (a[close] + b[close]), h[close], t[close]
        acc = np.zeros(m.shape, dtype=complex)
        for j, c in enumerate((1.0, 1 / 24, 1 / 1920, 1 / 322560)):
            acc += c * hc ** (2 * j) * _moment_integral(2 * j + 1, m, tc)
        out[close] = acc
    return out


def exponential_pair_integral(x, y, mu, t):
    """int_0^t int_0^t exp(x s + y s' - mu |s - s'|) ds ds'."""
    x, y, mu = (np.asarray(v, dtype=complex) for v in (x, y, mu))
    return divided_difference_e(x + y, x - mu, t) + divided_difference_e(x + y, y - mu, t)


# -- noise double integrals -----------------------------------------------

def _pf_weights(nodes):
    """Residues of n / prod_k (n - p_k) at each node p_k."""
    nodes = np.asarray(nodes, dtype=complex)
    w = np.empty_like(nodes)
    for k, p in enumerate(nodes):
        w[k] = p / np.prod(p - np.delete(nodes, k))
    return w


class _LerchTable:
    """F_ij(t) for the full (untruncated) correlation function."""

    def __init__(self, z, res: ReservoirSpec):
        self.z = np.asarray(z, dtype=complex)
        self.res = res
        kappa = res.matsubara_step
        self.kappa = kappa
        self.a = res.resonance_ratio
        self.A = cutoff_coefficient(res)
        self.B = 2.0 * res.gamma * res.Omega ** 2 * res.temperature
        xh = self.z / kappa
        self.xh = xh
        a = self.a
        psi_of = lambda p: -psi(1.0 - p)  # noqa: E731  sum_{n>=1} 1/(n - p) up to a constant
        self.SA = np.array([
            self.B / kappa ** 2 * np.sum(_pf_weights([a, -a, -xh[i]])
                                         * psi_of(np.array([a, -a, -xh[i]], dtype=complex)))
            for i in range(3)])
        self.nodes = {}
        self.SB = np.empty((3, 3), dtype=complex)
        for i in range(3):
            for j in range(3):
                nodes = np.array([a, -a, xh[i], -xh[j]], dtype=complex)
                w = _pf_weights(nodes)
                self.nodes[i, j] = (nodes, w)
                self.SB[i, j] = -self.B / kappa ** 3 * np.sum(w * psi_of(nodes))

    def _sq(self, q):
        """SQ[i, j](t) for every t, shape (3, 3, nt)."""
        cache = {}

        def phi(p):
            key = complex(p)
            if key not in cache:
                cache[key] = q * lerch_phi1(q, 1.0 - key)
            return cache[key]

        out = np.empty((3, 3, q.size), dtype=complex)
        for (i, j), (nodes, w) in self.nodes.items():
            out[i, j] = -self.B / self.kappa ** 3 * sum(wk * phi(p) for p, wk in zip(nodes, w))
        return out

    def table(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        z, Om = self.z, self.res.Omega
        out = np.zeros((3, 3, t.size), dtype=complex)
        pos = t > 0
        if not np.any(pos):
            return out
        tp = t[pos][None, None, :]
        sq = self._sq(np.exp(-self.kappa * tp[0, 0]))
        zi, zj = z[:, None, None], z[None, :, None]
        cut = self.A * exponential_pair_integral(zi, zj, Om, tp)
        mats = (expint_e(zi + zj, tp) * (self.SA[:, None, None] + self.SA[None, :, None])
                + (self.SB + self.SB.T)[:, :, None]
                - np.exp(zi * tp) * sq - np.exp(zj * tp) * sq.transpose(1, 0, 2))
        out[:, :, pos] = cut + mats
        return out

    def limit(self):
        z, Om = self.z, self.res.Omega
        out = np.empty((3, 3), dtype=complex)
        for i in range(3):
            for j in range(3):
                out[i, j] = (self.A * exponential_pair_integral(z[i], z[j], Om, np.inf)
                             - (self.SA[i] + self.SA[j]) / (z[i] + z[j])
                             + self.SB[i, j] + self.SB[j, i])
        return out


class _TruncatedTable:
    """F_ij(t) for the Matsubara series truncated after ``n_terms`` poles."""

    def __init__(self, z, res: ReservoirSpec, n_terms: int):
        self.z = np.asarray(z, dtype=complex)
        self.res = res
        Om = res.Omega
        nu = res.matsubara_step * np.arange(1, n_terms + 1, dtype=float)
        if np.any(np.abs(nu - Om) < NEAR_POLE * Om):
            raise DomainError("truncated series sits on a Matsubara resonance")
        pref = 2.0 * res.gamma * Om ** 2 / res.beta
        self.nu = nu
        self.b = pref * nu / (nu ** 2 - Om ** 2)
        self.A = res.gamma * Om / res.beta - pref * Om * np.sum(1.0 / (nu ** 2 - Om ** 2))

    def _eval(self, t):
        z, Om = self.z, self.res.Omega
        out = np.empty((3, 3), dtype=complex)
        for i in range(3):
            for j in range(3):
                acc = self.A * exponential_pair_integral(z[i], z[j], Om, t)
                for s in range(0, self.nu.size, 8192):
                    nu = self.nu[s:s + 8192]
                    acc += np.sum(self.b[s:s + 8192]
                                  * exponential_pair_integral(z[i], z[j], nu, t))
                out[i, j] = acc
        return out

    def table(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros((3, 3, t.size), dtype=complex)
        for k, tk in enumerate(t):
            if tk > 0:
                out[:, :, k] = self._eval(float(tk))
        return out

    def limit(self):
        return self._eval(np.inf)


def _needs_shift(z, res: ReservoirSpec) -> bool:
    """Partial fractions break down on a Matsubara resonance or a root at -nu_n."""
    a = res.resonance_ratio
    if round(a) >= 1 and abs(a - round(a)) < NEAR_POLE * max(1.0, a):
        return True
    xh = -np.asarray(z) / res.matsubara_step
    n = np.round(xh.real)
    return bool(np.any((n >= 1) & (np.abs(xh - n) < NEAR_POLE * np.maximum(1.0, n))))


class ExpsumNoise:
    """Closed-form F_ij(t) tables; shifts T symmetrically around singular points."""

    def __init__(self, z, res: ReservoirSpec, n_matsubara: int | None = None):
        self.z = np.asarray(z, dtype=complex)
        self.res = res
        self.n_matsubara = n_matsubara
        if _needs_shift(self.z, res):
            T = res.temperature
            self._parts = [replace(res, temperature=T * (1 + T_SHIFT)),
                           replace(res, temperature=T * (1 - T_SHIFT))]
            self.shifted = True
        else:
            self._parts = [res]
            self.shifted = False
        if n_matsubara is None:
            self._tables = [_LerchTable(self.z, r) for r in self._parts]
        else:
            self._tables = [_TruncatedTable(self.z, r, int(n_matsubara)) for r in self._parts]

    def table(self, t):
        return sum(tb.table(t) for tb in self._tables) / len(self._tables)

    def limit(self):
        return sum(tb.limit() for tb in self._tables) / len(self._tables)


def _contract(coeff, F):
    """I_ab = 2 sum_ij g_ai g_bj F_ij for the three noise pairs."""
    vals = [2.0 * np.einsum("i,j,ij...->...", coeff[a], coeff[b], F) for a, b in PAIRS]
    return np.real(np.array(vals))


def noise_integral(pset: PropagatorSet, res: ReservoirSpec, t, backend: str = "expsum",
                   n_matsubara: int | None = None, tol: float = QUAD_TOL):
    """(I_33, I_66, I_36) at time(s) t."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise DomainError("noise integrals need t >= 0")
    if backend == "expsum":
        out = _contract(pset.coeff, ExpsumNoise(pset.z, res, n_matsubara).table(t_arr))
    elif backend == "quad2d":
        out = np.stack([_quad2d(pset, res, float(tk), tol) for tk in np.atleast_1d(t_arr)],
                       axis=1)
    else:
        raise DomainError(f"unknown noise backend {backend!r}")
    return out[:, 0] if t_arr.ndim == 0 else out


def _quad2d(pset: PropagatorSet, res: ReservoirSpec, t: float, tol: float):
    """Validation backend: nested adaptive quadrature in u = |s - s'|.

    I_ab = 2 int_0^t C(u) H_ab(u) du with
    H_ab(u) = int_0^{t-u} [G_a(s+u) G_b(s) + G_a(s) G_b(s+u)] ds.
    """
    if t == 0.0:
        return np.zeros(3)
    coeff, z = pset.coeff, pset.z
    ia = [a for a, _ in PAIRS]
    ib = [b for _, b in PAIRS]

    def g(s):
        return eval_exponential_sum(coeff, z, s, check=False)[:, 0]

    def h(u):
        def inner(s):
            gs, gsu = g(s), g(s + u)
            return gsu[ia] * gs[ib] + gs[ia] * gsu[ib]
        val, err = integrate.quad_vec(inner, 0.0, t - u, epsabs=tol * 1e-3, epsrel=1e-12)
        return val

    def outer(u):
        return correlation_lerch(u, res)[0] * h(u)

    val, err = integrate.quad_vec(outer, 0.0, t, epsabs=tol * 0.1, epsrel=1e-12, limit=400)
    if err > tol:
        raise ToleranceError(f"quad2d reached only {err:.2e}", achieved=err)
    return 2.0 * val


# -- drive -----------------------------------------------------------------

def _drive_kernel_integral(z, omega_f, t):
    """int_0^t exp(z (t - tau)) sin(omega_f tau) dtau, elementwise in t."""
    t = np.asarray(t, dtype=float)[None, :]
    z = np.asarray(z, dtype=complex)[:, None]
    return ((omega_f * np.exp(z * t) - z * np.sin(omega_f * t) - omega_f * np.cos(omega_f * t))
            / (z ** 2 + omega_f ** 2))


def drive_response(pset: PropagatorSet, F0: float, omega_f: float, t):
    """Displacement shift from H_f = -F0 sin(omega_f t) x.

    The force enters dp/dt, so the response kernels are the momentum-kick
    responses G2 (for x) and G5 (for p) at every coupling angle.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if F0 == 0.0:
        return np.zeros((2, t_arr.size))
    basis = _drive_kernel_integral(pset.z, omega_f, t_arr)
    return F0 * np.real(pset.coeff[[1, 4]] @ basis)


# -- moments -----------------------------------------------------------------

@dataclass(frozen=True)
class MomentTrajectory:
    times: np.ndarray
    d: np.ndarray          # (nt, 2)
    sigma: np.ndarray      # (nt, 2, 2)
    backend_meta: dict = field(default_factory=dict)

    @property
    def states(self) -> list[GaussianState]:
        return [GaussianState(self.d[k], self.sigma[k]) for k in range(len(self.times))]

    def state(self, k: int) -> GaussianState:
        return GaussianState(self.d[k], self.sigma[k])


def _assemble(G, init: GaussianState, noise, drive, xp_factor: float):
    """Moments from propagators G (6, nt), noise (3, nt) and drive (2, nt)."""
    G1, G2, _, G4, G5, _ = G
    d0, s0 = init.d, init.sigma
    sxx0, spp0, sxp0 = s0[0, 0], s0[1, 1], s0[0, 1]
    d = np.stack([G1 * d0[0] + G2 * d0[1], G4 * d0[0] + G5 * d0[1]], axis=1)
    if drive is not None:
        d = d + drive.T
    sxx = G1 ** 2 * sxx0 + G2 ** 2 * spp0 + 2 * G1 * G2 * sxp0 + noise[0]
    spp = G4 ** 2 * sxx0 + G5 ** 2 * spp0 + 2 * G4 * G5 * sxp0 + noise[1]
    sxp = G1 * G4 * sxx0 + G2 * G5 * spp0 + xp_factor * (G1 * G5 + G2 * G4) * sxp0 + noise[2]
    sigma = np.empty((G.shape[1], 2, 2))
    sigma[:, 0, 0], sigma[:, 1, 1] = sxx, spp
    sigma[:, 0, 1] = sigma[:, 1, 0] = sxp
    return d, sigma


class ExactMoments:
    """Exact moment evaluator, reusable at arbitrary times."""

    def __init__(self, probe: ProbeSpec, res: ReservoirSpec, backend: str = "expsum",
                 n_matsubara: int | None = None, literal_g6: bool = False,
                 literal_xp: bool = False):
        self.probe, self.res = probe, res
        self.backend = backend
        self.n_matsubara = n_matsubara
        self.pset = build_propagators(probe, res, literal_g6=literal_g6)
        self.xp_factor = 2.0 if literal_xp else 1.0
        self.init = init_gaussian_state(probe)
        self._noise = (ExpsumNoise(self.pset.z, res, n_matsubara)
                       if backend == "expsum" else None)
        if backend not in ("expsum", "quad2d"):
            raise DomainError(f"unknown noise backend {backend!r}")

    @property
    def meta(self) -> dict:
        meta = {"noise_backend": self.backend}
        if self.backend == "expsum":
            meta["matsubara"] = "resummed" if self.n_matsubara is None else int(self.n_matsubara)
            meta["temperature_shift"] = self._noise.shifted
        else:
            meta["quad_tol"] = QUAD_TOL
        return meta

    def noise(self, t):
        if self._noise is not None:
            return _contract(self.pset.coeff, self._noise.table(t))
        return noise_integral(self.pset, self.res, t, backend="quad2d")

    def evaluate(self, t) -> MomentTrajectory:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < 0):
            raise DomainError("times must be >= 0")
        G = eval_exponential_sum(self.pset.coeff, self.pset.z, t)
        drive = None
        if self.probe.driven:
            dr = self.probe.drive
            drive = drive_response(self.pset, dr.F0, dr.omega_f, t)
        d, sigma = _assemble(G, self.init, self.noise(t), drive, self.xp_factor)
        at0 = t == 0
        d[at0], sigma[at0] = self.init.d, self.init.sigma
        return MomentTrajectory(t, d, sigma, self.meta)

    def steady_state(self, check: bool = True) -> GaussianState:
        if self.probe.driven:
            raise DomainError("steady state is defined for the undriven probe")
        if self._noise is None:
            raise DomainError("closed-form steady state needs the expsum backend")
        I = _contract(self.pset.coeff, self._noise.limit())
        sigma = np.array([[I[0], I[2]], [I[2], I[1]]])
        if check:
            t_inf = 50.0 / abs(float(np.max(self.pset.z.real)))
            late = self.evaluate(np.array([0.9 * t_inf, t_inf])).sigma
            drift = max(np.max(np.abs(late[1] - late[0])), np.max(np.abs(late[1] - sigma)))
            if drift > 1e-6 * max(1.0, np.max(np.abs(sigma))):
                raise ToleranceError(f"no stationarity at t={t_inf:.3g} (drift {drift:.2e})",
                                     achieved=drift)
        return GaussianState(np.zeros(2), sigma)


def evolve_moments(probe: ProbeSpec, res: ReservoirSpec, grid: SimGrid,
                   backend: str = "expsum", **kw) -> MomentTrajectory:
    return ExactMoments(probe, res, backend=backend, **kw).evaluate(grid.times)


def steady_state_moments(probe: ProbeSpec, res: ReservoirSpec, check: bool = True,
                         **kw) -> GaussianState:
    return ExactMoments(probe, res, **kw).steady_state(check=check)


# -- Markovian baseline -----------------------------------------------------

def markovian_noise_strength(probe: ProbeSpec, res: ReservoirSpec) -> float:
    """Weight D of C(s) ~ D delta(s); gamma w0 coth(w0 / 2T), which tends to 2 gamma T
    at high temperature and makes the stationary state exactly thermal."""
    w0 = probe.omega0
    return res.gamma * w0 / math.tanh(0.5 * w0 / res.temperature)


class MarkovMoments:
    """Markovian moments: delta-correlated noise and exponentially damped kernels."""

    def __init__(self, probe: ProbeSpec, res: ReservoirSpec, allow_overdamped: bool = True,
                 literal_xp: bool = False):
        self.probe, self.res = probe, res
        self.rates, self.coeff = markovian_exponential_sum(
            probe, res, allow_overdamped=allow_overdamped)
        self.D = markovian_noise_strength(probe, res)
        self.xp_factor = 2.0 if literal_xp else 1.0
        self.init = init_gaussian_state(probe)

    def noise(self, t):
        lam = self.rates
        w = lam[:, None] + lam[None, :]
        E = np.stack([expint_e(w, tk) for tk in np.atleast_1d(t)], axis=-1)
        return np.real(np.array([2.0 * self.D * np.einsum("i,j,ij...->...",
                                                          self.coeff[a], self.coeff[b], E)
                                 for a, b in PAIRS]))

    def evaluate(self, t) -> MomentTrajectory:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        G = eval_exponential_sum(self.coeff, self.rates, t)
        d, sigma = _assemble(G, self.init, self.noise(t), None, self.xp_factor)
        return MomentTrajectory(t, d, sigma, {"noise_backend": "markov"})

    def steady_state(self) -> GaussianState:
        # the stationary noise integrals sum to the canonical form for any gamma, Omega;
        # use it directly so the result carries no gamma-dependent round-off
        return GaussianState(np.zeros(2), gibbs_covariance(self.probe, self.res))


def markovian_moments(probe: ProbeSpec, res: ReservoirSpec, grid: SimGrid,
                      allow_overdamped: bool = False) -> MomentTrajectory:
    return MarkovMoments(probe, res, allow_overdamped=allow_overdamped).evaluate(grid.times)


def gibbs_covariance(probe: ProbeSpec, res: ReservoirSpec) -> np.ndarray:
    """Canonical covariance coth(w0 / 2T) diag(1/w0, w0)."""
    w0 = probe.omega0
    c = 1.0 / math.tanh(0.5 * w0 / res.temperature)
    return c * np.diag([1.0 / w0, w0])
