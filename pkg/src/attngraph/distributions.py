"""Distribution functions built from numerical primitives.

Implements the regularized incomplete beta function (continued fraction),
Student-t / F tail probabilities on top of it, and the studentized range
CDF by composite Gauss-Legendre quadrature. Accuracy targets: incomplete
beta to ~1e-12 relative; studentized range CDF to better than 1e-6
absolute (validated against high-precision references in the test suite).
"""
from __future__ import annotations

import math

import numpy as np

_MAX_CF_ITER = 300
_CF_EPS = 1e-15


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_CF_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        de = d * c
        h *= de
        if abs(de - 1.0) < _CF_EPS:
            return h
    return h


def reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must be in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf_two_sided(t: float, df: float) -> float:
    """Two-sided tail probability P(|T| >= |t|) for Student-t with df degrees of freedom."""
    if df <= 0:
        raise ValueError(f"df must be > 0, got {df}")
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return reg_inc_beta(df / 2.0, 0.5, x)


def f_dist_sf(f: float, df_num: float, df_den: float) -> float:
    """Upper tail P(F >= f) of the F distribution."""
    if df_num <= 0 or df_den <= 0:
        raise ValueError("degrees of freedom must be > 0")
    if f <= 0.0:
        return 1.0
    x = df_den / (df_den + df_num * f)
    return reg_inc_beta(df_den / 2.0, df_num / 2.0, x)


_erfc_vec = np.vectorize(math.erfc)


def normal_cdf(z: np.ndarray) -> np.ndarray:
    return 0.5 * _erfc_vec(-np.asarray(z, dtype=np.float64) / math.sqrt(2.0))


def _normal_pdf(z: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)

# Inner rule integrates over the location of the largest of k normals
# (phi decays past |z| ~ 9); 128 nodes give ~machine precision for this
# analytic integrand.
_INNER_NODES = 128
_Z_LO, _Z_HI = -9.0, 9.0
_zx, _zw = np.polynomial.legendre.leggauss(_INNER_NODES)
_Z = 0.5 * (_zx + 1.0) * (_Z_HI - _Z_LO) + _Z_LO
_ZW = 0.5 * (_Z_HI - _Z_LO) * _zw
_PHI_Z = _normal_pdf(_Z)
_CDF_Z = normal_cdf(_Z)


def normal_range_cdf(r: np.ndarray | float, k: int) -> np.ndarray:
    """CDF of the range of k iid standard normals, P(max - min <= r).

    P(r) = k * Integral phi(u) * [Phi(u) - Phi(u - r)]^(k-1) du.
    """
    r = np.atleast_1d(np.asarray(r, dtype=np.float64))
    out = np.zeros_like(r)
    pos = r > 0.0
    if pos.any():
        rp = r[pos][:, None]
        inner = _CDF_Z[None, :] - normal_cdf(_Z[None, :] - rp)
        inner = np.clip(inner, 0.0, None)
        vals = k * (_ZW[None, :] * _PHI_Z[None, :] * inner ** (k - 1)).sum(axis=1)
        out[pos] = np.clip(vals, 0.0, 1.0)
    return out


# Outer rule integrates the scaled-chi density of the pooled standard
# deviation; 8 composite panels x 40 nodes track both the sharp peak at
# large df and the heavy tail at small df.
_OUTER_PANELS = 8
_OUTER_NODES = 40
_sx, _sw = np.polynomial.legendre.leggauss(_OUTER_NODES)


def studentized_range_cdf(q: float, k: int, df: float) -> float:
    """CDF of the studentized range statistic for k groups and df error dof."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if df <= 0:
        raise ValueError(f"df must be > 0, got {df}")
    if q <= 0.0:
        return 0.0
    if df > 1e4:
        return float(normal_range_cdf(q, k)[0])

    # s ~ chi_df / sqrt(df); density c * s^(df-1) * exp(-df s^2 / 2).
    ln_c = (0.5 * df * math.log(df) - math.lgamma(0.5 * df)
            - (0.5 * df - 1.0) * math.log(2.0))
    s_hi = max(3.0, math.sqrt(2.0 * 60.0 / df) + 2.0)
    edges = np.linspace(0.0, s_hi, _OUTER_PANELS + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        s = 0.5 * (_sx + 1.0) * (hi - lo) + lo
        w = 0.5 * (hi - lo) * _sw
        with np.errstate(divide="ignore"):
            ln_dens = ln_c + (df - 1.0) * np.log(s) - 0.5 * df * s * s
        dens = np.where(s > 0.0, np.exp(ln_dens), 0.0)
        total += float((w * dens * normal_range_cdf(q * s, k)).sum())
    return min(1.0, max(0.0, total))


def studentized_range_sf(q: float, k: int, df: float) -> float:
    return 1.0 - studentized_range_cdf(q, k, df)
