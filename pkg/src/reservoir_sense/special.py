"""Lerch transcendent Phi(z, 1, a) and a scaled exponential integral.

Phi(z, 1, a) = sum_{n>=0} z**n / (n + a) for 0 <= z < 1.

For z <= 0.5 the series is summed directly.  Closer to z = 1 a block of
leading terms is summed directly (until Re(n + a) >= 20) and the remainder
is obtained from the Euler-Maclaurin formula applied to
f(x) = exp(-w x) / (x + a), w = -log z, whose integral is an exponential
integral.  The correction series is truncated after 10 Bernoulli terms;
for w < log 2 the neglected term is below 1e-15 relative.

Complex ``a`` is supported internally (the noise resummation needs it).
"""
import math

import numpy as np
from scipy.special import bernoulli, comb, exp1

from .exceptions import DomainError

_DIRECT_Q = 0.5
_DIRECT_TERMS = 70
_EM_SHIFT = 20
_EM_ORDER = 10
_B = bernoulli(2 * _EM_ORDER)
_EM_WEIGHTS = [_B[2 * k] / math.factorial(2 * k) for k in range(1, _EM_ORDER + 1)]


def scaled_exp1(u):
    """exp(u) * E1(u) for complex u with Re(u) > 0, overflow free."""
    u = np.asarray(u, dtype=complex)
    out = np.empty_like(u)
    big = np.abs(u) > 50.0
    small = ~big
    out[small] = np.exp(u[small]) * exp1(u[small])
    if np.any(big):
        ub = u[big]
        term = 1.0 / ub
        acc = term.copy()
        for k in range(1, 18):
            term = -term * k / ub
            acc += term
        out[big] = acc
    return out


def _check_pole(a):
    ar = np.real(a)
    if abs(np.imag(a)) < 1e-14 and ar <= 0 and abs(ar - round(ar)) < 1e-12:
        raise DomainError(f"Lerch transcendent has a pole at a={a}")


def lerch_phi1(q, a):
    """Vectorised Phi(q, 1, a) over q (array in [0, 1)), scalar a.

    Returns a complex array; callers with real ``a`` take the real part.
    """
    a = complex(a)
    _check_pole(a)
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if np.any(q < 0) or np.any(q >= 1):
        raise DomainError("Lerch transcendent needs 0 <= z < 1")
    out = np.empty(q.shape, dtype=complex)

    direct = q <= _DIRECT_Q
    if np.any(direct):
        n_terms = _DIRECT_TERMS + max(0, int(math.ceil(-a.real)))
        n = np.arange(n_terms)
        qd = q[direct][:, None]
        with np.errstate(under="ignore"):
            out[direct] = np.sum(qd ** n / (n + a), axis=1)

    em = ~direct
    if np.any(em):
        qe = q[em]
        w = -np.log(qe)
        n_head = max(0, int(math.ceil(-a.real))) + _EM_SHIFT
        n = np.arange(n_head)
        head = np.sum(qe[:, None] ** n / (n + a), axis=1)

        big_n = n_head
        x = big_n + a
        decay = np.exp(-w * big_n)
        tail = scaled_exp1(w * x) + 0.5 / x
        # f^(m)(N) / exp(-w N) = sum_j C(m, j) (-w)^(m-j) (-1)^j j! / x^(j+1)
        for k, weight in enumerate(_EM_WEIGHTS, start=1):
            m = 2 * k - 1
            deriv = np.zeros_like(w, dtype=complex)
            for j in range(m + 1):
                deriv += (comb(m, j, exact=True) * (-w) ** (m - j)
                          * (-1) ** j * math.factorial(j) / x ** (j + 1))
            tail -= weight * deriv
        out[em] = head + decay * tail
    return out


def lerch_phi(z, a):
    """Lerch transcendent Phi(z, 1, a) = sum_n z**n / (n + a), real arguments.

    ``z`` may be an array in [0, 1); ``a`` must not be a non-positive integer.
    """
    if np.iscomplexobj(a):
        raise TypeError("lerch_phi takes a real 'a'; use lerch_phi1 for complex")
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr >= 1) or np.any(z_arr < 0):
        raise DomainError("lerch_phi is defined here for 0 <= z < 1 only")
    res = lerch_phi1(z_arr.ravel(), float(a)).real.reshape(z_arr.shape)
    return float(res) if res.ndim == 0 else res
