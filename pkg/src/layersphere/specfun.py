"""Spherical Bessel/Hankel functions of complex argument and Legendre functions.

Two families of routines live here:

* Value routines (``spherical_j``, ``spherical_y``, ``spherical_h`` and their
  derivatives, plus ``*_scaled`` variants).  These work anywhere in the complex
  plane and are what users and tests call.
* Log-form routines (``log_spherical_j``, ``log_spherical_h``).  These return
  ``log f_n(z)`` and the logarithmic derivative ``f_n'(z)/f_n(z)`` for all
  orders at once.  They are restricted to ``Im z >= 0`` (the decaying branch
  used by the diffusion solver) and never overflow or underflow, which is what
  lets the interface system be assembled from ratios such as
  ``j_n(kr)/j_n(kb)``.

Hankel functions are of the first kind, ``h_n = j_n + i y_n``, which decays as
``Im z -> +inf``.

Associated Legendre functions are returned WITHOUT the Condon-Shortley phase,
i.e. ``P_1^1(x) = +sqrt(1 - x^2)``.  Every product used by the Green's function
is of the form ``P_n^m(x) P_n^m(x0)`` and is insensitive to that choice.
"""

from __future__ import annotations

import math

import numpy as np

# exp() overflows past this
_MAX_EXP = 700.0


def _as_complex(z):
    z = np.asarray(z, dtype=complex)
    if not np.all(np.isfinite(z)):
        raise ValueError("argument must be finite")
    return z


def _check_order(n):
    if int(n) != n or n < 0:
        raise ValueError(f"order must be a non-negative integer, got {n!r}")
    return int(n)


def _miller_start(nmax, absz):
    return int(nmax + 20 + math.sqrt(40.0 * (nmax + 1)) + 1.2 * absz)


# --------------------------------------------------------------------------
# scaled sequences j_n(z) e^{-|Im z|}, y_n(z) e^{-|Im z|}, h_n(z) e^{-iz}
# --------------------------------------------------------------------------

def _scaled_trig(z):
    """sin z and cos z multiplied by exp(-|Im z|)."""
    # e^{iz-|y|} and e^{-iz-|y|}: one of them has modulus 1, the other <= 1
    ep = np.exp(1j * z - np.abs(z.imag))
    em = np.exp(-1j * z - np.abs(z.imag))
    return (ep - em) / 2j, (ep + em) / 2.0


def _j_scaled_seq(nmax, z):
    """Array (..., nmax+1) of j_n(z) e^{-|Im z|} for n = 0..nmax."""
    if nmax < 1:
        # the normalisation needs both j_0 and j_1 (j_0 vanishes at k pi)
        return _j_scaled_seq(1, z)[..., : nmax + 1]
    z = np.asarray(z, dtype=complex)
    out = np.zeros(z.shape + (nmax + 1,), dtype=complex)
    absz = np.abs(z)
    zero = absz == 0
    sin_s, cos_s = _scaled_trig(np.where(zero, 1.0, z))
    zz = np.where(zero, 1.0, z)
    j0 = sin_s / zz
    j1 = sin_s / zz**2 - cos_s / zz
    # small |z|: j_0 and j_1 from their series (no cancellation in j_1)
    small = absz < 1e-3
    if np.any(small):
        z2 = zz * zz
        scale = np.exp(-np.abs(zz.imag))
        j0 = np.where(small, (1 - z2 / 6 + z2 * z2 / 120) * scale, j0)
        j1 = np.where(small, zz / 3 * (1 - z2 / 10 + z2 * z2 / 280) * scale, j1)

    down = ~zero
    if np.any(down):
        zd = zz[down]
        start = _miller_start(nmax, float(np.max(absz[down])))
        f = np.zeros(zd.shape + (nmax + 1,), dtype=complex)
        fkp1 = np.zeros(zd.shape, dtype=complex)
        fk = np.full(zd.shape, 1e-300, dtype=complex)
        for k in range(start, 0, -1):
            fkp1, fk = fk, (2 * k + 1) / zd * fk - fkp1
            if k - 1 <= nmax:
                f[..., k - 1] = fk
            big = np.abs(fk) > 1e250
            if np.any(big):
                s = np.where(big, 1e-250, 1.0)
                fk = fk * s
                fkp1 = fkp1 * s
                f = f * s[..., None]
        # normalise against whichever of j_0, j_1 is better conditioned
        j0d, j1d = j0[down], j1[down]
        f0 = f[..., 0]
        f1 = f[..., 1] if nmax >= 1 else None
        if f1 is None:
            norm = j0d / f0
        else:
            use0 = np.abs(j0d) >= np.abs(j1d)
            norm = np.where(use0, j0d / f0, j1d / np.where(f1 == 0, 1.0, f1))
        out[down] = f * norm[..., None]
    if np.any(zero):
        out[zero] = 0.0
        out[zero, 0] = 1.0
    return out


def _y_scaled_seq(nmax, z):
    """Array (..., nmax+1) of y_n(z) e^{-|Im z|}, built as i (j_n - h_n).

    Direct upward recurrence for y_n is unstable for large Im z (its small
    Hankel component is swamped), so y is assembled from the two stable
    sequences instead.
    """
    z = np.asarray(z, dtype=complex)
    if np.any(z == 0):
        raise ValueError("y_n and h_n are singular at z = 0")
    j = _j_scaled_seq(nmax, z)
    h = _h_scaled_seq(nmax, z)
    # h e^{-|Im z|} = h_scaled e^{iz - |Im z|}, modulus of the factor <= 1
    factor = np.exp(1j * z - np.abs(z.imag))
    with np.errstate(over="ignore", invalid="ignore"):
        return 1j * (j - h * factor[..., None])


def _h_upper_scaled(nmax, z):
    out = np.zeros(z.shape + (nmax + 1,), dtype=complex)
    out[..., 0] = -1j / z
    if nmax >= 1:
        out[..., 1] = -(z + 1j) / z**2
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, nmax):
            out[..., n + 1] = (2 * n + 1) / z * out[..., n] - out[..., n - 1]
    return out


def _h_scaled_seq(nmax, z):
    """Array (..., nmax+1) of h_n(z) e^{-iz}.

    Upward recurrence is stable for Im z >= 0.  Below the real axis h_n
    behaves like 2 j_n there, so it is rebuilt as 2 j_n - h2_n with the second
    kind obtained by conjugate symmetry from the upper half-plane.
    """
    z = np.asarray(z, dtype=complex)
    if np.any(z == 0):
        raise ValueError("y_n and h_n are singular at z = 0")
    lower = z.imag < 0
    out = _h_upper_scaled(nmax, np.where(lower, np.conj(z), z))
    if np.any(lower):
        zl = z[lower]
        h2 = np.conj(out[lower]) * np.exp(-2j * zl)[..., None]
        j = _j_scaled_seq(nmax, zl) * np.exp(-1j * zl.real)[..., None]
        out[lower] = 2 * j - h2
    return out


def _derivative(seq_ext, z, n):
    """f_n' from f_{n-1}, f_n, f_{n+1} (any family)."""
    if n == 0:
        return -seq_ext[..., 1]
    return seq_ext[..., n - 1] - (n + 1) / z * seq_ext[..., n]


def _finish(values, log_factor, name):
    """Multiply scaled values by exp(log_factor), refusing to overflow."""
    if np.any(np.real(log_factor) > _MAX_EXP):
        raise OverflowError(
            f"{name}: |Im z| too large for unscaled evaluation; use the scaled variant"
        )
    out = values * np.exp(log_factor)
    if not np.all(np.isfinite(out)):
        raise OverflowError(f"{name}: result out of floating-point range")
    return out[()] if np.ndim(out) == 0 else out


def spherical_j_scaled(n, z):
    """``j_n(z) * exp(-|Im z|)``."""
    n = _check_order(n)
    z = _as_complex(z)
    v = _j_scaled_seq(n, z)[..., n]
    return v[()] if v.ndim == 0 else v


def spherical_y_scaled(n, z):
    """``y_n(z) * exp(-|Im z|)``."""
    n = _check_order(n)
    z = _as_complex(z)
    v = _y_scaled_seq(n, z)[..., n]
    return v[()] if v.ndim == 0 else v


def spherical_h_scaled(n, z):
    """``h_n(z) * exp(-iz)``, bounded for large ``Im z``."""
    n = _check_order(n)
    z = _as_complex(z)
    v = _h_scaled_seq(n, z)[..., n]
    return v[()] if v.ndim == 0 else v


def spherical_j(n, z):
    """Spherical Bessel function of the first kind, complex argument."""
    n = _check_order(n)
    z = _as_complex(z)
    return _finish(_j_scaled_seq(n, z)[..., n], np.abs(z.imag), "spherical_j")


def spherical_y(n, z):
    """Spherical Bessel function of the second kind, complex argument."""
    n = _check_order(n)
    z = _as_complex(z)
    return _finish(_y_scaled_seq(n, z)[..., n], np.abs(z.imag), "spherical_y")


def spherical_h(n, z):
    """Spherical Hankel function ``h_n = j_n + i y_n`` (decays for Im z > 0)."""
    n = _check_order(n)
    z = _as_complex(z)
    return _finish(_h_scaled_seq(n, z)[..., n], 1j * z, "spherical_h")


def spherical_j_derivative(n, z):
    n = _check_order(n)
    z = _as_complex(z)
    seq = _j_scaled_seq(n + 1, z)
    zero = z == 0
    zz = np.where(zero, 1.0, z)
    d = _derivative(seq, zz, n)
    d = np.where(zero, 1.0 / 3.0 if n == 1 else 0.0, d)
    return _finish(d, np.abs(z.imag), "spherical_j_derivative")


def spherical_y_derivative(n, z):
    n = _check_order(n)
    z = _as_complex(z)
    seq = _y_scaled_seq(n + 1, z)
    return _finish(_derivative(seq, z, n), np.abs(z.imag), "spherical_y_derivative")


def spherical_h_derivative(n, z):
    n = _check_order(n)
    z = _as_complex(z)
    seq = _h_scaled_seq(n + 1, z)
    return _finish(_derivative(seq, z, n), 1j * z, "spherical_h_derivative")


def spherical_jyh(nmax, z):
    """All orders 0..nmax of j, y, h at once (unscaled), shape (..., nmax+1)."""
    nmax = _check_order(nmax)
    z = _as_complex(z)
    j = _finish(_j_scaled_seq(nmax, z), np.abs(z.imag)[..., None], "spherical_j")
    y = _finish(_y_scaled_seq(nmax, z), np.abs(z.imag)[..., None], "spherical_y")
    h = _finish(_h_scaled_seq(nmax, z), (1j * z)[..., None], "spherical_h")
    return j, y, h


# --------------------------------------------------------------------------
# log-form sequences for the upper half-plane
# --------------------------------------------------------------------------

def _upper(z):
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag < 0):
        raise ValueError("log-form routines require Im z >= 0")
    return z


def log_spherical_j(nmax, z):
    """``(log j_n(z), j_n'(z)/j_n(z))`` for n = 0..nmax, ``Im z >= 0``.

    Ratios ``j_k/j_{k-1}`` come from the downward continued fraction, so the
    result stays finite where ``j_n`` itself would underflow.  At ``z = 0``
    the log is ``-inf`` for ``n >= 1`` and the log-derivative is undefined
    (returned as nan).
    """
    z = _upper(z)
    zero = z == 0
    zz = np.where(zero, 1.0, z)
    absz = np.abs(zz)
    start = _miller_start(nmax + 1, float(np.max(absz, initial=0.0)))
    ratio = np.zeros(z.shape + (nmax + 2,), dtype=complex)  # ratio[k] = j_k/j_{k-1}
    rho = np.zeros(z.shape, dtype=complex)
    for k in range(start, 0, -1):
        rho = zz / (2 * k + 1 - zz * rho)
        if k <= nmax + 1:
            ratio[..., k] = rho
    # log j_0 = log(sin z / z) written to stay finite for large Im z
    small = absz < 1e-4
    with np.errstate(over="ignore", invalid="ignore"):
        big = -1j * zz + np.log(-np.expm1(2j * zz) * 0.5j) - np.log(zz)
    z2 = zz * zz
    series = np.log1p(-z2 / 6 + z2 * z2 / 120)
    logj0 = np.where(small, series, big)
    with np.errstate(divide="ignore"):
        logratio = np.log(np.where(zero[..., None], 0.0, ratio[..., 1:nmax + 1]))
    logj = np.empty(z.shape + (nmax + 1,), dtype=complex)
    logj[..., 0] = np.where(zero, 0.0, logj0)
    if nmax >= 1:
        logj[..., 1:] = logj[..., :1] + np.cumsum(logratio, axis=-1)
    orders = np.arange(nmax + 1)
    dlog = orders / zz[..., None] - ratio[..., 1:nmax + 2]
    dlog = np.where(zero[..., None], np.nan, dlog)
    return logj, dlog


def log_spherical_h(nmax, z):
    """``(log h_n(z), h_n'(z)/h_n(z))`` for n = 0..nmax, ``Im z >= 0``, ``z != 0``."""
    z = _upper(z)
    if np.any(z == 0):
        raise ValueError("h_n is singular at z = 0")
    ratio = np.empty(z.shape + (nmax + 2,), dtype=complex)  # ratio[k] = h_k/h_{k-1}
    ratio[..., 0] = np.nan
    ratio[..., 1] = 1.0 / z - 1j
    for k in range(1, nmax + 1):
        ratio[..., k + 1] = (2 * k + 1) / z - 1.0 / ratio[..., k]
    logh = np.empty(z.shape + (nmax + 1,), dtype=complex)
    logh[..., 0] = -0.5j * np.pi + 1j * z - np.log(z)
    if nmax >= 1:
        logh[..., 1:] = logh[..., :1] + np.cumsum(np.log(ratio[..., 1:nmax + 1]), axis=-1)
    orders = np.arange(nmax + 1)
    dlog = orders / z[..., None] - ratio[..., 1:nmax + 2]
    return logh, dlog


# --------------------------------------------------------------------------
# Legendre
# --------------------------------------------------------------------------

def legendre_p(n, m, x):
    """Associated Legendre function P_n^m(x), no Condon-Shortley phase."""
    n = _check_order(n)
    m = _check_order(m)
    if m > n:
        raise ValueError("require 0 <= m <= n")
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1):
        raise ValueError("legendre_p requires |x| <= 1")
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    pmm = np.ones_like(x)
    for i in range(1, m + 1):
        pmm = pmm * (2 * i - 1) * s
    if n == m:
        return pmm[()] if pmm.ndim == 0 else pmm
    pm1 = x * (2 * m + 1) * pmm
    prev, cur = pmm, pm1
    for l in range(m + 2, n + 1):
        prev, cur = cur, ((2 * l - 1) * x * cur - (l + m - 1) * prev) / (l - m)
    return cur[()] if cur.ndim == 0 else cur


def legendre_all(nmax, x):
    """Ordinary Legendre polynomials P_0..P_nmax at x, shape (..., nmax+1)."""
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1):
        raise ValueError("legendre_all requires |x| <= 1")
    out = np.empty(x.shape + (nmax + 1,))
    out[..., 0] = 1.0
    if nmax >= 1:
        out[..., 1] = x
    for l in range(1, nmax):
        out[..., l + 1] = ((2 * l + 1) * x * out[..., l] - l * out[..., l - 1]) / (l + 1)
    return out
