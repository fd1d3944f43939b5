"""Closed-form planar functions of the quartic model and their lowest identities.

Functions whose first argument is an ``x``-value (``xv``, ``xz``) are kept
apart from functions of curve points (``z``, ``w``): the former are rational
in ``x(.)``, the latter only rational on the curve.  Every product over the
non-principal preimages ``z^k`` uses :meth:`SpectralCurve.fiber`.
"""

from __future__ import annotations

import numpy as np

from .curve import SpectralCurve, ae_eval
from .errors import DiagonalHit, PoleHit


def _arr(z):
    return np.asarray(z, dtype=complex)


def _guard(den, what):
    if np.any(np.abs(den) < 1e-300):
        raise PoleHit(f"{what}: vanishing denominator")


def u01(curve: SpectralCurve, z, w):
    """Planar one-boundary function ``U(z, w)``.

    ``U(z, w) = 1/(x(z) + y(w)) * prod_{k>=1} (x(w) + y(z^k)) / (x(w) - x(eps_k))``.
    """
    z, w = _arr(z), _arr(w)
    fb = curve.fiber(z)[..., 1:]
    xw = curve.x(w)[..., None]
    xe = curve.x(curve.eps)
    den = curve.x(z) + curve.y(w)
    _guard(den, "u01")
    return np.prod((xw + curve.y(fb)) / (xw - xe), axis=-1) / den


def u01_diag(curve: SpectralCurve, z):
    """Diagonal ``U(z, z) = 2 (x(z) - x(0)) AE(x(z))^2 / (x(z) + y(z))^2``."""
    z = _arr(z)
    xz = curve.x(z)
    den = (xz + curve.y(z)) ** 2
    _guard(den, "u01_diag")
    return 2 * (xz - curve.x0) * ae_eval(curve, xz) ** 2 / den


def ae_ratio(curve: SpectralCurve, z):
    """``AE(x(z)) / (x(z) + y(z))``, continued to its finite value at ``z = eps_k``.

    At ``eps_k`` the pole of ``AE`` cancels against the pole of ``y``; the limit
    is ``-prod_j (e_k - x(alpha_j)) / prod_{j != k} (e_k - e_j) / ((lambda/N) r_k)``.
    """
    z = _arr(z)
    out = np.empty(z.shape, dtype=complex)
    flat, zf = out.reshape(-1), z.reshape(-1)
    xe = curve.x(curve.eps)
    xa = curve.x(curve.alpha)
    for idx, zz in enumerate(zf):
        hit = np.flatnonzero(np.abs(zz - curve.eps) < 1e-13 * (1 + np.abs(curve.eps)))
        if hit.size:
            k = hit[0]
            others = np.delete(xe, k)
            flat[idx] = -np.prod(xe[k] - xa) / np.prod(xe[k] - others) / (curve.c * curve.r[k])
        else:
            xz = curve.x(zz)
            flat[idx] = ae_eval(curve, xz) / (xz + curve.y(zz))
    return out[()] if out.ndim == 0 else out


def v01(curve: SpectralCurve, z, w):
    """Planar two-boundary function ``V(z, w)`` built from ``U`` and ``AE``."""
    z, w = _arr(z), _arr(w)
    xz, xw = curve.x(z), curve.x(w)
    if np.any(np.abs(xw - xz) < 1e-12 * (1 + np.abs(xz))):
        raise DiagonalHit("v01 on the diagonal x(w) = x(z)")
    corr = (xw + xz - 2 * curve.x0) * ae_ratio(curve, z) * ae_ratio(curve, w)
    return curve.lam / (xw - xz) ** 2 * (u01(curve, z, w) - corr)


def h01(curve: SpectralCurve, xv, z):
    """``H(x(v); z) = prod_{k>=1} (xv + y(z^k)) / (xv - x(eps_k))``."""
    xv, z = _arr(xv), _arr(z)
    fb = curve.fiber(z)[..., 1:]
    xe = curve.x(curve.eps)
    return np.prod((xv[..., None] + curve.y(fb)) / (xv[..., None] - xe), axis=-1)


def p01(curve: SpectralCurve, xv, z):
    """``P(x(v), x(z))``: the full-fiber product ``prod_{k>=0} (xv + y(z^k)) / prod_k (xv - x(eps_k))``."""
    xv, z = _arr(xv), _arr(z)
    fb = curve.fiber(z)
    xe = curve.x(curve.eps)
    return np.prod(xv[..., None] + curve.y(fb), axis=-1) / np.prod(xv[..., None] - xe, axis=-1)


def qhat01(curve: SpectralCurve, xv, xz):
    """``Qhat(xv, xz) = -lambda (xv + xz - 2 x(0)) AE(xv) AE(xz) / (xv - xz)^2``."""
    xv, xz = _arr(xv), _arr(xz)
    if np.any(np.abs(xv - xz) < 1e-12 * (1 + np.abs(xz))):
        raise DiagonalHit("qhat01 on the diagonal")
    return (-curve.lam * (xv + xz - 2 * curve.x0) * ae_eval(curve, xv) * ae_eval(curve, xz)
            / (xv - xz) ** 2)


def qhat01_square_rhs(curve: SpectralCurve, v, z):
    """Square-root representation of ``Qhat^2`` in terms of diagonal ``P`` values.

    ``lambda^2 (xv + xz - 2x0)^2 P(xv, xv) P(xz, xz) / (4 (xv - xz)^4 (xv - x0)(xz - x0))``
    with ``xv = x(v)``, ``xz = x(z)``.
    """
    v, z = _arr(v), _arr(z)
    xv, xz, x0 = curve.x(v), curve.x(z), curve.x0
    pvv = p01(curve, xv, v)
    pzz = p01(curve, xz, z)
    return (curve.lam**2 * (xv + xz - 2 * x0) ** 2 * pvv * pzz
            / (4 * (xv - xz) ** 4 * (xv - x0) * (xz - x0)))


# -- lowest Dyson-Schwinger residuals ------------------------------------------


def dse_u_residual(curve: SpectralCurve, z, w):
    """``(x(w) + y(z)) U(z, w) + (lambda/N) sum_k r_k U(eps_k, w) / (x(z) - x(eps_k)) - 1``."""
    z, w = _arr(z), _arr(w)
    xe = curve.x(curve.eps)
    tail = sum(r_k * u01(curve, e_k, w) / (curve.x(z) - xe_k)
               for r_k, e_k, xe_k in zip(curve.r, curve.eps, xe))
    return (curve.x(w) + curve.y(z)) * u01(curve, z, w) + curve.c * tail - 1


def dse_v_residual(curve: SpectralCurve, z, w):
    """Planar two-boundary equation: left side minus right side.

    ``(x(z) + y(z)) V(z, w) + (lambda/N) sum_k r_k V(eps_k, w) / (x(z) - x(eps_k))``
    against ``-lambda (U(z, w) - U(w, w)) / (x(w) - x(z))``.
    """
    z, w = _arr(z), _arr(w)
    xe = curve.x(curve.eps)
    tail = sum(r_k * v01(curve, e_k, w) / (curve.x(z) - xe_k)
               for r_k, e_k, xe_k in zip(curve.r, curve.eps, xe))
    lhs = (curve.x(z) + curve.y(z)) * v01(curve, z, w) + curve.c * tail
    rhs = -curve.lam * (u01(curve, z, w) - u01_diag(curve, w)) / (curve.x(w) - curve.x(z))
    return lhs - rhs
