"""The spectral curve ``x(z) = z - (lambda/N) sum_k rho_k / (z + eps_k)``, ``y(z) = -x(-z)``.

:func:`bootstrap` fixes the pole positions ``eps_k`` and weights ``rho_k``
from the model data ``(e_k, r_k, lambda, N)`` through ``x(eps_k) = e_k`` and
``rho_k x'(eps_k) = r_k``.  The resulting :class:`SpectralCurve` answers every
geometric question the correlator engine asks: values and derivatives of
``x`` and ``y``, fibers ``x^{-1}(x(z))``, ramification points (zeros of
``x'``), the local Galois involution around each of them, and the nonzero
solutions ``alpha_k`` of ``x(z) = x(-z)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .contour import safe_radius, spectral_tail, unit_roots
from .errors import AmbiguousConjugate, BadConfig, NonConvergence, PoleHit
from .ratcore import Polynomial, RationalFunction, poly_roots, poly_roots_batch, ratfun_derivative

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CurveConfig:
    """Model data: coupling ``lam``, size ``bigN``, eigenvalues ``e`` with multiplicities ``r``."""

    lam: float
    bigN: float
    e: tuple
    r: tuple

    def __post_init__(self):
        e = tuple(float(v) for v in self.e)
        r = tuple(float(v) for v in self.r)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "r", r)
        if len(e) == 0 or len(e) != len(r):
            raise BadConfig("e and r must be non-empty and of equal length")
        if any(v <= 0 for v in e) or any(b <= a for a, b in zip(e, e[1:])):
            raise BadConfig("e must be positive and strictly increasing")
        if any(v <= 0 for v in r):
            raise BadConfig("multiplicities r must be positive")
        if not self.bigN > 0:
            raise BadConfig("N must be positive")
        if not np.isfinite(self.lam):
            raise BadConfig("lambda must be finite")

    @property
    def d(self) -> int:
        return len(self.e)


def _residuals(eps, rho, c, e, r):
    s = eps[:, None] + eps[None, :]
    xe = eps - c * np.sum(rho[None, :] / s, axis=1)
    xpe = 1 + c * np.sum(rho[None, :] / s**2, axis=1)
    return np.concatenate([xe - e, rho * xpe - r])


def _jacobian(eps, rho, c):
    d = len(eps)
    s = eps[:, None] + eps[None, :]
    s2 = np.sum(rho[None, :] / s**2, axis=1)
    s3 = np.sum(rho[None, :] / s**3, axis=1)
    eye = np.eye(d)
    jac = np.empty((2 * d, 2 * d), dtype=complex)
    jac[:d, :d] = eye + c * (rho[None, :] / s**2 + eye * s2[:, None])
    jac[:d, d:] = -c / s
    jac[d:, :d] = -2 * c * rho[:, None] * (rho[None, :] / s**3 + eye * s3[:, None])
    jac[d:, d:] = eye * (1 + c * s2)[:, None] + c * rho[:, None] / s**2
    return jac


@dataclass(eq=False)
class SpectralCurve:
    """Bootstrapped curve data with vectorised evaluators.

    Attributes
    ----------
    config : CurveConfig
    eps, rho : ndarray
        Pole positions (``x`` has poles at ``-eps``) and weights.
    beta : ndarray
        The ``2d`` ramification points, zeros of ``x'``.
    alpha : ndarray
        The ``d`` nonzero solutions of ``x(z) = x(-z)`` with positive real part.
    x0 : complex
        ``x(0)``.
    x_num, x_den, xp_num, xp_den : Polynomial
        Cleared forms of ``x`` and ``x'``.
    newton_iterations : int
    """

    config: CurveConfig
    eps: np.ndarray
    rho: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray
    x0: complex
    x_num: Polynomial
    x_den: Polynomial
    xp_num: Polynomial
    xp_den: Polynomial
    newton_iterations: int = 0
    _sigma_cache: dict = field(default_factory=dict, repr=False)

    # -- scalars -----------------------------------------------------------
    @property
    def lam(self) -> float:
        return self.config.lam

    @property
    def d(self) -> int:
        return self.config.d

    @property
    def c(self) -> float:
        """The ubiquitous ratio ``lambda / N``."""
        return self.config.lam / self.config.bigN

    @property
    def r(self) -> np.ndarray:
        return np.asarray(self.config.r, dtype=float)

    @property
    def degenerate(self) -> bool:
        return self.config.lam == 0

    # -- evaluators (no pole checks; see the module-level wrappers) ----------
    def x(self, z):
        z = np.asarray(z, dtype=complex)
        return z - self.c * np.sum(self.rho / (z[..., None] + self.eps), axis=-1)

    def y(self, z):
        return -self.x(-np.asarray(z, dtype=complex))

    def xp(self, z):
        return self.x_deriv(z, 1)

    def x_deriv(self, z, m: int):
        """Exact ``m``-th derivative of ``x`` (``m = 0`` returns ``x``)."""
        if m == 0:
            return self.x(z)
        z = np.asarray(z, dtype=complex)
        sign = (-1) ** m
        tail = -self.c * sign * math.factorial(m) * np.sum(
            self.rho / (z[..., None] + self.eps) ** (m + 1), axis=-1)
        return (1.0 if m == 1 else 0.0) + tail

    def y_deriv(self, z, m: int):
        """Exact ``m``-th derivative of ``y(z) = -x(-z)``."""
        return -((-1) ** m) * self.x_deriv(-np.asarray(z, dtype=complex), m)

    # -- fibers --------------------------------------------------------------
    def fiber(self, z) -> np.ndarray:
        """Preimages of ``x(z)``, shape ``z.shape + (d + 1,)``, entry 0 equal to ``z``."""
        z = np.asarray(z, dtype=complex)
        if self.degenerate:
            return z[..., None].copy()
        X = self.x(z)
        num = self.x_num.coeffs
        den = np.zeros_like(num)
        den[: len(self.x_den.coeffs)] = self.x_den.coeffs
        coeffs = num - X[..., None] * den
        roots = poly_roots_batch(coeffs)
        # put the root closest to z first and overwrite it with z itself
        k0 = np.argmin(np.abs(roots - z[..., None]), axis=-1)
        rest_mask = np.ones(roots.shape, dtype=bool)
        np.put_along_axis(rest_mask, k0[..., None], False, axis=-1)
        rest = roots[rest_mask].reshape(roots.shape[:-1] + (self.d,))
        return np.concatenate([z[..., None], rest], axis=-1)

    def sigma_by_fiber(self, i: int, q, check: bool = True) -> np.ndarray:
        """Local Galois conjugate of ``q`` at ``beta[i]`` chosen from the fiber."""
        q = np.asarray(q, dtype=complex)
        others = self.fiber(q)[..., 1:]
        dist = np.abs(others - self.beta[i])
        order = np.argsort(dist, axis=-1)
        best = np.take_along_axis(others, order[..., :1], axis=-1)[..., 0]
        if check and self.d >= 2:
            d1 = np.take_along_axis(dist, order[..., :1], axis=-1)[..., 0]
            d2 = np.take_along_axis(dist, order[..., 1:2], axis=-1)[..., 0]
            if np.any(d2 < 2 * d1):
                raise AmbiguousConjugate(f"two fiber points compete near beta[{i}]")
        return best

    # -- local involution as a power series ----------------------------------
    def sigma_radius(self, i: int) -> float:
        """Radius of the disk around ``beta[i]`` on which the series of sigma is used."""
        return self._sigma_data(i)[0]

    def sigma_coeffs(self, i: int) -> np.ndarray:
        """Taylor coefficients ``s_m`` of ``sigma_i(q) = sum s_m (q - beta_i)^m``."""
        return self._sigma_data(i)[1]

    def sigma(self, i: int, q) -> np.ndarray:
        """Galois conjugate at ``beta[i]`` from its Taylor series (for ``|q - beta_i|`` within the series disk)."""
        s = self.sigma_coeffs(i)
        t = np.asarray(q, dtype=complex) - self.beta[i]
        acc = np.full(t.shape, s[-1], dtype=complex)
        for a in s[-2::-1]:
            acc = acc * t + a
        return acc

    def _sigma_singular_set(self, i: int) -> np.ndarray:
        pts = [self.beta[j] for j in range(len(self.beta)) if j != i]
        for j in range(len(self.beta)):
            fb = self.fiber(np.asarray(self.beta[j]))
            pts.extend(fb[1:] if j == i else fb)
        pts.extend(-self.eps)
        return np.asarray(pts, dtype=complex)

    def _sigma_data(self, i: int):
        if i in self._sigma_cache:
            return self._sigma_cache[i]
        sing = self._sigma_singular_set(i)
        sing = sing[np.abs(sing - self.beta[i]) > 1e-7 * (1 + abs(self.beta[i]))]
        h = safe_radius(self.beta[i], sing, 0.5)
        n = 64
        while True:
            nodes = self.beta[i] + h * unit_roots(n)
            vals = self.sigma_by_fiber(i, nodes)
            if spectral_tail(vals) < 1e-15 or n >= 1024:
                break
            n *= 2
        coeffs = np.fft.fft(vals) / n
        coeffs = coeffs[: n // 2] / h ** np.arange(n // 2)
        # drop modes that are pure rounding noise
        keep = np.abs(coeffs) * h ** np.arange(n // 2) > 1e-17 * (1 + abs(self.beta[i]))
        last = int(np.flatnonzero(keep).max()) + 1 if np.any(keep) else 1
        coeffs = coeffs[:last]
        coeffs[0] = self.beta[i]
        self._sigma_cache[i] = (h, coeffs)
        return self._sigma_cache[i]

    def sigma_power_matrix(self, i: int, p: int) -> np.ndarray:
        """Matrix ``C[k, m]``: coefficient of ``(q - beta_i)^m`` in ``(sigma_i(q) - beta_i)^k``, ``k, m < p``."""
        key = ("pow", i)
        cached = self._sigma_cache.get(key)
        if cached is not None and cached.shape[0] >= p:
            return cached[:p, :p]
        s = np.zeros(p, dtype=complex)
        sc = self.sigma_coeffs(i)
        s[1 : min(p, len(sc))] = sc[1 : min(p, len(sc))]
        mat = np.zeros((p, p), dtype=complex)
        power = np.zeros(p, dtype=complex)
        power[0] = 1
        for k in range(p):
            mat[k] = power
            power = np.convolve(power, s)[:p]
        self._sigma_cache[key] = mat
        return mat

    # -- singular sets used for contour radii -----------------------------------
    @cached_property
    def special_points(self) -> np.ndarray:
        """Ramification points, zero, ``+-eps_k`` and ``+-alpha_k``."""
        return np.concatenate([self.beta, [0.0], self.eps, -self.eps, self.alpha, -self.alpha]).astype(complex)

    @cached_property
    def beta_fiber_points(self) -> np.ndarray:
        """Non-ramified fiber points over each ``x(beta_i)`` and over each ``x(eps_k)``."""
        pts = []
        for b in self.beta:
            # beta is a double root of its own fiber: drop the two nearest roots
            f = self.fiber(np.asarray(b))
            pts.extend(f[np.argsort(np.abs(f - b))[2:]])
        for ek in self.eps:
            pts.extend(self.fiber(np.asarray(ek))[1:])
        return np.asarray(pts, dtype=complex)

    def summary(self) -> dict:
        """Plain-data description, complex numbers as ``[re, im]``."""
        cz = lambda v: [float(np.real(v)), float(np.imag(v))]
        xe = self.x(self.eps)
        return {
            "lambda": self.config.lam,
            "N": self.config.bigN,
            "e": list(self.config.e),
            "r": list(self.config.r),
            "eps": [cz(v) for v in self.eps],
            "rho": [cz(v) for v in self.rho],
            "beta": [cz(v) for v in self.beta],
            "alpha": [cz(v) for v in self.alpha],
            "x0": cz(self.x0),
            "newton_iterations": self.newton_iterations,
            "residual_x": float(np.max(np.abs(xe - np.asarray(self.config.e)))),
            "residual_rho": float(np.max(np.abs(self.rho * self.xp(self.eps) - self.r))),
        }


def _sort_points(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    return v[np.lexsort((np.round(v.imag, 12), np.round(v.real, 12)))]


def bootstrap(config: CurveConfig, tol: float = 1e-12, max_iter: int = 100) -> SpectralCurve:
    """Solve for ``(eps, rho)`` by damped Newton and assemble the curve.

    Newton starts at ``eps = e``, ``rho = r``.  A step is halved while the
    residual norm fails to decrease.

    Parameters
    ----------
    config : CurveConfig
    tol : float
        Required bound on ``|x(eps_k) - e_k| / (1 + e_k)`` and
        ``|rho_k x'(eps_k) - r_k| / (1 + r_k)``.
    max_iter : int
        Newton iteration budget.

    Raises
    ------
    NonConvergence
        If the residual bound is not met within the budget.
    """
    e = np.asarray(config.e, dtype=complex)
    r = np.asarray(config.r, dtype=complex)
    d = config.d
    c = config.lam / config.bigN
    eps, rho = e.copy(), r.copy()
    scale = np.concatenate([1 + np.abs(e), 1 + np.abs(r)])
    F = _residuals(eps, rho, c, e, r)
    it = 0
    while np.max(np.abs(F) / scale) > tol:
        if it >= max_iter:
            raise NonConvergence(f"bootstrap residual {np.max(np.abs(F)):.3e} after {it} iterations")
        try:
            step = np.linalg.solve(_jacobian(eps, rho, c), F)
        except np.linalg.LinAlgError as exc:
            raise NonConvergence("singular bootstrap Jacobian") from exc
        t, norm0 = 1.0, np.linalg.norm(F)
        while True:
            eps_t, rho_t = eps - t * step[:d], rho - t * step[d:]
            F_t = _residuals(eps_t, rho_t, c, e, r)
            if np.linalg.norm(F_t) < norm0 or t < 1e-10:
                break
            t /= 2
        if not np.all(np.isfinite(F_t)):
            raise NonConvergence("bootstrap diverged")
        eps, rho, F = eps_t, rho_t, F_t
        it += 1
    log.debug("bootstrap converged in %d iterations", it)

    if c == 0:
        one = Polynomial([1])
        ident = Polynomial([0, 1])
        return SpectralCurve(config, eps, rho, np.zeros(0, complex), np.zeros(0, complex),
                             0j, ident, one, one, one, it)

    den = Polynomial([1])
    for ek in eps:
        den = den * Polynomial([ek, 1])
    num = Polynomial([0, 1]) * den
    for k in range(d):
        part = Polynomial([c * rho[k]])
        for l in range(d):
            if l != k:
                part = part * Polynomial([eps[l], 1])
        num = num - part
    xp = ratfun_derivative(RationalFunction(num, den))
    beta = _sort_points(poly_roots(xp.num))

    odd = num * den.reflect() - num.reflect() * den
    roots = poly_roots(odd)
    k0 = int(np.argmin(np.abs(roots)))
    rest = np.delete(roots, k0)
    pick = (rest.real > 1e-12) | ((np.abs(rest.real) <= 1e-12) & (rest.imag > 0))
    alpha = _sort_points(rest[pick])
    if len(alpha) != d:
        raise NonConvergence("could not pair the roots of x(z) - x(-z)")

    curve = SpectralCurve(config, eps, rho, beta, alpha, 0j, num, den, xp.num, xp.den, it)
    curve.x0 = complex(curve.x(0.0))
    return curve


# -- public wrappers with pole checks --------------------------------------------


def _check_pole(z, poles, what):
    z = np.asarray(z, dtype=complex)
    if poles.size and np.any(np.abs(z[..., None] - poles) < 1e-14 * (1 + np.abs(poles))):
        raise PoleHit(f"{what} has a pole at {z}")


def x_eval(curve: SpectralCurve, z):
    """``x(z)``; raises :class:`PoleHit` at ``z = -eps_k``."""
    _check_pole(z, -curve.eps if not curve.degenerate else np.zeros(0), "x")
    return curve.x(z)


def y_eval(curve: SpectralCurve, z):
    """``y(z) = -x(-z)``; raises :class:`PoleHit` at ``z = eps_k``."""
    _check_pole(z, curve.eps if not curve.degenerate else np.zeros(0), "y")
    return curve.y(z)


def xp_eval(curve: SpectralCurve, z):
    """``x'(z)``; raises :class:`PoleHit` at ``z = -eps_k``."""
    _check_pole(z, -curve.eps if not curve.degenerate else np.zeros(0), "x'")
    return curve.xp(z)


def preimages(curve: SpectralCurve, z: complex) -> np.ndarray:
    """The ``d + 1`` points of ``x^{-1}(x(z))``; entry 0 is ``z`` itself.

    Raises
    ------
    NonConvergence
        If a fiber point misses ``x(t) = x(z)`` by more than ``1e-9`` relative.
    """
    fb = curve.fiber(np.asarray(z, dtype=complex))
    X = curve.x(z)
    if np.any(np.abs(curve.x(fb) - X) > 1e-9 * (1 + abs(X))):
        raise NonConvergence("fiber roots not accurate")
    return fb


def galois_conjugate(curve: SpectralCurve, i: int, q: complex) -> complex:
    """The fiber partner of ``q`` that merges with it at ``beta[i]``."""
    return complex(curve.sigma_by_fiber(i, np.asarray(q, dtype=complex)))


def ae_eval(curve: SpectralCurve, xi):
    """``prod_k (xi - x(alpha_k)) / (xi - x(eps_k))``."""
    xi = np.asarray(xi, dtype=complex)
    xe = curve.x(curve.eps)
    if np.any(np.abs(xi[..., None] - xe) < 1e-14 * (1 + np.abs(xe))):
        raise PoleHit(f"ae has a pole at {xi}")
    xa = curve.x(curve.alpha)
    return np.prod((xi[..., None] - xa) / (xi[..., None] - xe), axis=-1)
