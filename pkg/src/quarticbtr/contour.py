"""Cauchy integrals on circles by the trapezoidal rule.

For a function analytic on an annulus around the circle ``|t - c| = r`` the
equispaced trapezoidal rule converges geometrically, so Laurent
coefficients, residues and derivatives all reduce to discrete Fourier
transforms of samples on the circle.  Nodes sit at angles ``2 pi j / n``
starting from angle zero, which keeps every sample point bit-reproducible.

Two layers live here: scalar routines with node doubling (``laurent_coeff``,
``residue``, ``cauchy_derivative``, ``dx_derivative``) and array helpers used
by the correlator engine, which works on whole batches of circles at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateGeometry, NonConvergence, RamificationPoint

MIN_RADIUS = 1e-8


@dataclass(frozen=True)
class Disk:
    """Closed disk ``|t - center| <= radius``."""

    center: complex
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")


@dataclass(frozen=True)
class ContourSettings:
    """Quadrature controls.

    Attributes
    ----------
    base_nodes : int
        Starting node count for every circle.
    max_nodes : int
        Node doubling stops here; must be ``base_nodes * 2**k``.
    agree_tol : float
        Relative agreement demanded between the ``n`` and ``2n`` results.
    safety : float
        Radius as a fraction of the distance to the nearest foreign
        singularity.
    deriv_nodes : int
        Fixed node count for the derivative circles nested inside the
        correlator engine (their radii are set by ``safety``, so the
        aliasing error is bounded by ``safety**deriv_nodes``).
    """

    base_nodes: int = 64
    max_nodes: int = 1024
    agree_tol: float = 1e-10
    safety: float = 0.4
    deriv_nodes: int = 32

    def __post_init__(self):
        if self.base_nodes < 16:
            raise ValueError("base_nodes must be at least 16")
        ratio = self.max_nodes / self.base_nodes
        if ratio < 1 or ratio != 2 ** round(math.log2(ratio)):
            raise ValueError("max_nodes must be a power-of-two multiple of base_nodes")
        if not 0 < self.safety < 1:
            raise ValueError("safety must lie in (0, 1)")
        if self.deriv_nodes < 8:
            raise ValueError("deriv_nodes must be at least 8")


DEFAULT_SETTINGS = ContourSettings()


def unit_roots(n: int) -> np.ndarray:
    """The ``n`` nodes ``exp(2 pi i j / n)``, ``j = 0..n-1``."""
    return np.exp(2j * np.pi * np.arange(n) / n)


def _coeff_from_samples(vals: np.ndarray, radius, m: int) -> np.ndarray:
    # c_m = (1 / 2 pi i) \oint f(t) (t - c)^(-m-1) dt = mean_j f_j w_j^(-m) r^(-m)
    n = vals.shape[-1]
    w = unit_roots(n) ** (-m)
    return np.mean(vals * w, axis=-1) * np.asarray(radius, dtype=float) ** (-m)


def laurent_coeff(f: Callable, disk: Disk, m: int,
                  settings: ContourSettings = DEFAULT_SETTINGS) -> complex:
    """Coefficient of ``(t - center)**m`` in the Laurent series of ``f``.

    The node count doubles from ``settings.base_nodes`` until two successive
    estimates agree to ``agree_tol`` relative to the larger of the estimate
    and the natural scale ``max|f| * radius**(-m)`` on the circle (the latter
    guards coefficients that are exactly zero).

    Parameters
    ----------
    f : callable
        Vectorised function of a complex array.
    disk : Disk
        Circle of integration; ``f`` may only be singular at its center.
    m : int
        Power whose coefficient is wanted (``m = -1`` gives the residue).

    Raises
    ------
    NonConvergence
        If ``max_nodes`` is reached without agreement.
    """
    n = settings.base_nodes
    nodes = disk.center + disk.radius * unit_roots(n)
    vals = np.asarray(f(nodes), dtype=complex)
    prev = _coeff_from_samples(vals, disk.radius, m)
    while n < settings.max_nodes:
        n *= 2
        # reuse the old samples: they are the even-indexed nodes of the new grid
        odd = disk.center + disk.radius * unit_roots(n)[1::2]
        vo = np.asarray(f(odd), dtype=complex)
        full = np.empty(n, dtype=complex)
        full[0::2], full[1::2] = vals, vo
        vals = full
        cur = _coeff_from_samples(vals, disk.radius, m)
        scale = max(abs(cur), np.max(np.abs(vals)) * disk.radius ** (-m))
        if abs(cur - prev) <= settings.agree_tol * scale:
            return complex(cur)
        prev = cur
    raise NonConvergence(f"no agreement up to {settings.max_nodes} nodes around {disk.center}")


def safe_radius(a: complex, singularities: Sequence[complex], safety: float,
                default: float = 1.0) -> float:
    """``safety`` times the distance from ``a`` to the nearest other singularity.

    Entries coinciding with ``a`` (to rounding) are treated as ``a`` itself.

    Raises
    ------
    DegenerateGeometry
        If the nearest foreign singularity is closer than ``1e-8``.
    """
    s = np.asarray(list(singularities), dtype=complex)
    d = np.abs(s - a)
    d = d[d > 1e-14 * (1 + abs(a))]
    if d.size == 0:
        return safety * default
    dmin = float(d.min())
    if dmin < MIN_RADIUS:
        raise DegenerateGeometry(f"singularity at distance {dmin:.2e} from {a}")
    return safety * dmin


def residue(f: Callable, a: complex, singularities: Sequence[complex],
            settings: ContourSettings = DEFAULT_SETTINGS) -> complex:
    """Residue of ``f`` at ``a`` on a circle sized by :func:`safe_radius`."""
    r = safe_radius(a, singularities, settings.safety)
    return laurent_coeff(f, Disk(a, r), -1, settings)


def cauchy_derivative(f: Callable, a: complex, k: int, singularities: Sequence[complex],
                      settings: ContourSettings = DEFAULT_SETTINGS) -> complex:
    """``k``-th derivative of ``f`` at the regular point ``a``, as ``k! c_k``."""
    if k < 0:
        raise ValueError("k must be non-negative")
    r = safe_radius(a, singularities, settings.safety)
    return math.factorial(k) * laurent_coeff(f, Disk(a, r), k, settings)


def taylor_coeffs(f: Callable, a: complex, kmax: int, singularities: Sequence[complex],
                  settings: ContourSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """Taylor coefficients ``c_0..c_kmax`` of ``f`` about ``a`` (one doubling check on ``c_kmax``)."""
    r = safe_radius(a, singularities, settings.safety)
    laurent_coeff(f, Disk(a, r), kmax, settings)  # convergence check only
    n = settings.base_nodes
    while n < 4 * (kmax + 1):
        n *= 2
    nodes = a + r * unit_roots(2 * n)
    vals = np.asarray(f(nodes), dtype=complex)
    return np.array([_coeff_from_samples(vals, r, m) for m in range(kmax + 1)])


def _reversion(xs: np.ndarray, order: int) -> np.ndarray:
    """Coefficients ``b_1..b_order`` of ``t(xi)`` inverting ``xi = sum_{m>=1} xs[m] t^m``."""
    b = np.zeros(order + 1, dtype=complex)
    b[1] = 1 / xs[1]
    for k in range(2, order + 1):
        # xi = x(t(xi)); the xi^k coefficient of the composition must vanish
        comp = np.zeros(order + 1, dtype=complex)
        power = np.zeros(order + 1, dtype=complex)
        power[0] = 1
        for m in range(1, k + 1):
            power = np.convolve(power, b)[: order + 1]
            comp += xs[m] * power
        b[k] -= comp[k] / xs[1]
    return b


def dx_derivative(f: Callable, a: complex, k: int, curve, singularities: Sequence[complex],
                  settings: ContourSettings = DEFAULT_SETTINGS) -> complex:
    """``(d/dx)^k f`` at ``a``, where ``x`` is the curve's cover map.

    For ``k <= 2`` the chain rule is written out,
    ``f'/x'`` and ``f''/x'^2 - f' x''/x'^3``, with the ``f`` derivatives from
    :func:`cauchy_derivative` and exact ``x`` derivatives from the curve.  Higher
    orders use series reversion of ``x`` about ``a``.

    Raises
    ------
    RamificationPoint
        If ``|x'(a)| < 1e-8``.
    """
    x1 = curve.x_deriv(a, 1)
    if abs(x1) < 1e-8:
        raise RamificationPoint(f"x'({a}) = {x1}")
    if k == 0:
        return complex(f(np.asarray([a]))[0])
    if k == 1:
        return cauchy_derivative(f, a, 1, singularities, settings) / x1
    if k == 2:
        f1 = cauchy_derivative(f, a, 1, singularities, settings)
        f2 = cauchy_derivative(f, a, 2, singularities, settings)
        x2 = curve.x_deriv(a, 2)
        return f2 / x1**2 - f1 * x2 / x1**3
    fc = taylor_coeffs(f, a, k, singularities, settings)
    xs = np.array([0] + [curve.x_deriv(a, m) / math.factorial(m) for m in range(1, k + 1)],
                  dtype=complex)
    t_of_xi = _reversion(xs, k)
    comp = np.zeros(k + 1, dtype=complex)
    comp[0] = fc[0]
    power = np.zeros(k + 1, dtype=complex)
    power[0] = 1
    for m in range(1, k + 1):
        power = np.convolve(power, t_of_xi)[: k + 1]
        comp += fc[m] * power
    return math.factorial(k) * comp[k]


# ---------------------------------------------------------------------------
# array helpers for the correlator engine


def circle_nodes(centers, radii, n: int) -> np.ndarray:
    """Nodes of many circles: shape ``centers.shape + (n,)``."""
    c = np.asarray(centers, dtype=complex)
    r = np.asarray(radii, dtype=float)
    return c[..., None] + r[..., None] * unit_roots(n)


def principal_part(vals: np.ndarray, radii, pmax: int) -> np.ndarray:
    """Laurent coefficients ``a_{-1}, ..., a_{-pmax}`` from circle samples.

    ``vals`` has the nodes on its last axis.  The result has shape
    ``vals.shape[:-1] + (pmax,)`` with column ``k`` holding ``a_{-(k+1)}``.
    """
    n = vals.shape[-1]
    spec = np.fft.ifft(vals, axis=-1)  # spec[..., j] = mean_l f_l w_l^j
    # a_{-p} = mean f w^p r^p = spec[..., p] r^p
    idx = np.arange(1, pmax + 1) % n
    r = np.asarray(radii, dtype=float)[..., None]
    return spec[..., idx] * r ** np.arange(1, pmax + 1)


def spectral_tail(vals: np.ndarray) -> np.ndarray:
    """Largest Fourier mode near the Nyquist band relative to the largest mode.

    Small values certify that the trapezoidal rule has resolved the samples;
    the band is the top eighth of the spectrum on either side.
    """
    n = vals.shape[-1]
    spec = np.abs(np.fft.fft(vals, axis=-1))
    band = np.arange(n // 2 - n // 8, n // 2 + n // 8 + 1) % n
    top = np.max(spec, axis=-1)
    top = np.where(top > 0, top, 1.0)
    return np.max(spec[..., band], axis=-1) / top


def derivatives_on_circles(vals: np.ndarray, radii, kmax: int) -> np.ndarray:
    """Derivatives ``f^(k)(center)`` for ``k = 0..kmax`` from circle samples.

    Returns shape ``vals.shape[:-1] + (kmax + 1,)``.
    """
    spec = np.fft.fft(vals, axis=-1) / vals.shape[-1]  # spec[..., k] = mean f w^(-k)
    r = np.asarray(radii, dtype=float)[..., None]
    ks = np.arange(kmax + 1)
    fact = np.array([math.factorial(k) for k in ks], dtype=float)
    return spec[..., : kmax + 1] * fact / r**ks
