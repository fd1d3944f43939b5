"""Dense complex polynomials and rational functions.

Coefficients are stored in increasing powers, ``coeffs[k]`` multiplying
``t**k``, the same convention as :mod:`numpy.polynomial.polynomial`, which
does the heavy lifting for products, sums and the companion-matrix roots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import NonConvergence, PoleHit

TAU_POLE = 1e-10


def _trim(c) -> np.ndarray:
    c = np.atleast_1d(np.asarray(c, dtype=complex))
    if c.size == 0:
        return np.zeros(1, dtype=complex)
    nz = np.flatnonzero(c != 0)
    if nz.size == 0:
        return np.zeros(1, dtype=complex)
    return c[: nz[-1] + 1].copy()


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Univariate polynomial with complex coefficients.

    Parameters
    ----------
    coeffs : array_like
        Coefficients in increasing powers. Trailing zeros are stripped; the
        zero polynomial is ``[0]``.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _trim(self.coeffs))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return self.degree == 0 and self.coeffs[0] == 0

    def __call__(self, t):
        return poly_eval(self, t)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(npoly.polyadd(self.coeffs, _as_poly(other).coeffs))

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(npoly.polysub(self.coeffs, _as_poly(other).coeffs))

    def __mul__(self, other) -> "Polynomial":
        if np.isscalar(other):
            return Polynomial(self.coeffs * other)
        return Polynomial(npoly.polymul(self.coeffs, _as_poly(other).coeffs))

    __rmul__ = __mul__

    def __neg__(self) -> "Polynomial":
        return Polynomial(-self.coeffs)

    def deriv(self) -> "Polynomial":
        if self.degree == 0:
            return Polynomial([0])
        return Polynomial(npoly.polyder(self.coeffs))

    def reflect(self) -> "Polynomial":
        """Return the polynomial ``t -> p(-t)``."""
        sign = (-1.0) ** np.arange(len(self.coeffs))
        return Polynomial(self.coeffs * sign)

    def __repr__(self) -> str:
        return f"Polynomial({np.array2string(self.coeffs, precision=6)})"


def _as_poly(p) -> Polynomial:
    return p if isinstance(p, Polynomial) else Polynomial(np.atleast_1d(p))


def poly_eval(p: Polynomial, t):
    """Evaluate ``p`` at ``t`` by Horner's scheme.

    Works elementwise on arrays of evaluation points.
    """
    c = p.coeffs
    t = np.asarray(t, dtype=complex)
    acc = np.full(t.shape, c[-1], dtype=complex)
    for a in c[-2::-1]:
        acc = acc * t + a
    return acc[()] if acc.ndim == 0 else acc


def _polish(c: np.ndarray, roots: np.ndarray, iters: int = 8) -> np.ndarray:
    """Newton-polish ``roots`` (any shape) of the polynomial with coefficients ``c``."""
    dc = npoly.polyder(c) if len(c) > 1 else np.zeros(1)
    r = roots.astype(complex).copy()
    pr = npoly.polyval(r, c)
    for _ in range(iters):
        dp = npoly.polyval(r, dc)
        ok = np.abs(dp) > 1e-300
        step = np.where(ok, pr / np.where(ok, dp, 1.0), 0.0)
        cand = r - step
        pc = npoly.polyval(cand, c)
        better = np.abs(pc) < np.abs(pr)
        if not np.any(better):
            break
        r = np.where(better, cand, r)
        pr = np.where(better, pc, pr)
    return r


def poly_roots(p: Polynomial, tol: float = 1e-12) -> np.ndarray:
    """All roots of ``p`` with multiplicity.

    Companion-matrix eigenvalues followed by Newton polish on the original
    polynomial.

    Parameters
    ----------
    p : Polynomial
        Polynomial of degree at least one.
    tol : float
        Acceptance bound on ``|p(root)| / (s * (1 + |root|)**deg)`` where ``s``
        is the largest coefficient modulus.

    Raises
    ------
    NonConvergence
        If some root does not meet ``tol`` after polishing.
    """
    if p.degree < 1:
        raise ValueError("poly_roots needs degree >= 1")
    c = p.coeffs
    roots = _polish(c, npoly.polyroots(c))
    scale = np.max(np.abs(c))
    resid = np.abs(npoly.polyval(roots, c)) / (scale * (1 + np.abs(roots)) ** p.degree)
    if np.any(resid > tol):
        raise NonConvergence(f"root polish stalled, worst scaled residual {resid.max():.3e}")
    return roots


def poly_roots_batch(coeffs: np.ndarray, polish_iters: int = 4) -> np.ndarray:
    """Roots of many monic polynomials of the same degree at once.

    Parameters
    ----------
    coeffs : ndarray, shape (..., deg + 1)
        Increasing-power coefficients; the last column must be 1.

    Returns
    -------
    ndarray, shape (..., deg)
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    deg = coeffs.shape[-1] - 1
    lead = coeffs[..., :-1]
    if deg == 1:
        return -lead
    if deg == 2:
        b, c0 = lead[..., 1], lead[..., 0]
        disc = np.sqrt(b * b - 4 * c0)
        # pick the sign that avoids cancellation, then use Vieta
        s = np.where(np.real(np.conj(b) * disc) >= 0, 1.0, -1.0)
        r1 = -(b + s * disc) / 2
        safe = np.abs(r1) > 0
        r2 = np.where(safe, c0 / np.where(safe, r1, 1.0), -b - r1)
        return np.stack([r1, r2], axis=-1)
    comp = np.zeros(coeffs.shape[:-1] + (deg, deg), dtype=complex)
    comp[..., 1:, :-1] = np.eye(deg - 1)
    comp[..., :, -1] = -lead
    roots = np.linalg.eigvals(comp)
    # batched Newton polish on the original coefficients
    dco = coeffs[..., 1:] * np.arange(1, deg + 1)
    r = roots
    for _ in range(polish_iters):
        pv = _horner_rows(coeffs, r)
        dv = _horner_rows(dco, r)
        ok = np.abs(dv) > 1e-300
        r = np.where(ok, r - pv / np.where(ok, dv, 1.0), r)
    return r


def _horner_rows(coeffs: np.ndarray, t: np.ndarray) -> np.ndarray:
    acc = np.broadcast_to(coeffs[..., -1:], t.shape).astype(complex)
    for k in range(coeffs.shape[-1] - 2, -1, -1):
        acc = acc * t + coeffs[..., k : k + 1]
    return acc


@dataclass(frozen=True, eq=False)
class RationalFunction:
    """Quotient ``num / den`` of two polynomials (not reduced)."""

    num: Polynomial
    den: Polynomial

    def __post_init__(self):
        if self.den.is_zero:
            raise ValueError("denominator is identically zero")

    def __call__(self, t):
        return ratfun_eval(self, t)

    def common_roots(self, tau: float = 1e-10) -> np.ndarray:
        """Roots shared by numerator and denominator within ``tau``."""
        if self.num.degree < 1 or self.den.degree < 1:
            return np.zeros(0, dtype=complex)
        rn, rd = poly_roots(self.num), poly_roots(self.den)
        dist = np.abs(rn[:, None] - rd[None, :])
        return rn[np.any(dist < tau * (1 + np.abs(rn))[:, None], axis=1)]


def ratfun_eval(f: RationalFunction, t, tau_pole: float = TAU_POLE):
    """Evaluate ``f`` at ``t``; raise :class:`PoleHit` on a vanishing denominator."""
    d = poly_eval(f.den, t)
    scale = np.max(np.abs(f.den.coeffs)) * (1 + np.abs(t)) ** f.den.degree
    if np.any(np.abs(d) < tau_pole * scale):
        raise PoleHit(f"denominator vanishes at {t}")
    return poly_eval(f.num, t) / d


def ratfun_derivative(f: RationalFunction) -> RationalFunction:
    """Quotient-rule derivative ``(n' d - n d') / d**2`` without simplification."""
    num = f.num.deriv() * f.den - f.num * f.den.deriv()
    return RationalFunction(num, f.den * f.den)
