"""Global loop equations as numerical identities on fiber sums.

Each ``check_*`` function evaluates both sides of one identity at one sample
point and returns a :class:`LoopEqReport`.  Right-hand sides are assembled
from named contributions (kept in ``report.terms``) so that tests can remove
a single term and confirm the identity then fails.

Correlators are obtained from a callable ``evaluator(g, z, us)``; by default
this is :meth:`quarticbtr.recursion.Engine.w`.  Passing a wrapped evaluator
lets a caller perturb individual correlators.

In the genus-one identities the second ``x(u)``-derivative inside the braces
enters with a plus sign, i.e. the brace reads
``lam^2 Omega_reg(u,u)/(X+y)^3 - lam W^(1)_1(u)/(X+y)^2 + lam^2/(2 (X+y)^2) d^2_{x(u)} (X+y)^-1``
with ``X = x(z)``, ``y = y(u)``; with a minus sign the linear equation at one
insertion fails by a term proportional to that derivative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from . import closedforms as cf
from .contour import Disk, laurent_coeff, safe_radius
from .curve import SpectralCurve
from .errors import BadConfig, StabilityViolation
from .recursion import EvalCache, RecursionSettings, _engine, w_base

IDENTITIES = ("lin_g0", "quad_g0", "lin_g1", "quad_g1", "dse_u0", "dse_v0", "diag_u01",
              "qhat_identity", "sym_u01", "sym_p01", "residue")

Evaluator = Callable[[int, complex, tuple], complex]


def relative_residual(lhs: complex, rhs: complex) -> float:
    """``|lhs - rhs| / (1 + max(|lhs|, |rhs|))``."""
    return abs(lhs - rhs) / (1 + max(abs(lhs), abs(rhs)))


@dataclass(frozen=True)
class LoopEqReport:
    """Both sides of one identity at one sample point."""

    identity: str
    sample_point: tuple
    lhs: complex
    rhs: complex
    terms: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.identity not in IDENTITIES:
            raise ValueError(f"unknown identity {self.identity!r}")
        object.__setattr__(self, "lhs", complex(self.lhs))
        object.__setattr__(self, "rhs", complex(self.rhs))
        object.__setattr__(self, "sample_point", tuple(complex(p) for p in self.sample_point))

    @property
    def residual(self) -> float:
        return relative_residual(self.lhs, self.rhs)

    def without(self, *names: str) -> float:
        """Residual after removing the named right-hand-side contributions."""
        rhs = self.rhs - sum(self.terms[n] for n in names)
        return relative_residual(self.lhs, rhs)

    def to_dict(self) -> dict:
        c = lambda v: [v.real, v.imag]
        return {"identity": self.identity,
                "sample_point": [c(p) for p in self.sample_point],
                "lhs": c(self.lhs), "rhs": c(self.rhs), "residual": self.residual}


# ---------------------------------------------------------------------------
# helpers


def set_partitions(items: Sequence) -> Iterator[list]:
    """All partitions of ``items`` into nonempty blocks."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [[first]] + part
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1:]


def _evaluator(curve, cache, settings, evaluator) -> Evaluator:
    if evaluator is not None:
        return evaluator
    eng = _engine(curve, cache, settings)
    return lambda g, z, us: complex(eng.w(g, z, tuple(us)))


def _fiber(curve: SpectralCurve, z: complex) -> np.ndarray:
    return curve.fiber(np.asarray(complex(z)))


def _splittings(us: tuple):
    """Ordered pairs ``(I1, I2)`` with ``I1 + I2 = us``."""
    n = len(us)
    for mask in range(1 << n):
        yield (tuple(us[j] for j in range(n) if mask >> j & 1),
               tuple(us[j] for j in range(n) if not mask >> j & 1))


def loop_insert_power(curve: SpectralCurve, u: complex, p: int, xval: complex,
                      iprime: Sequence[complex] = (), cache: EvalCache | None = None,
                      settings: RecursionSettings | None = None,
                      evaluator: Evaluator | None = None) -> complex:
    """Loop insertions ``D_{I'} (xval + y(u))^(-p)``.

    Each insertion ``D_v`` acts on ``y(u)`` as ``lam W^(0)_2(u; v)``, and on
    higher correlators by adding ``v`` to their argument set, which sums to

    ``sum_pi (-1)^|pi| p (p+1)...(p+|pi|-1) (xval + y(u))^(-p-|pi|) prod_B lam W^(0)_{|B|+1}(u; B)``

    over set partitions ``pi`` of ``I'``.
    """
    if p < 1:
        raise ValueError("p must be a positive integer")
    ev = _evaluator(curve, cache, settings, evaluator)
    base = complex(xval) + complex(curve.y(complex(u)))
    total = 0j
    for part in set_partitions(list(iprime)):
        k = len(part)
        rising = math.prod(range(p, p + k))
        prod = 1 + 0j
        for block in part:
            prod *= curve.lam * ev(0, u, tuple(block))
        total += (-1) ** k * rising * prod / base ** (p + k)
    return total


def _x0_insertion(curve, u, ev) -> complex:
    """``D^0_u x(0) = -(lam/2) W^(0)_2(0; u)``."""
    return -curve.lam / 2 * complex(w_base(curve, 0.0, u))


def _dx_inverse_power(curve, X: complex, u: complex, p: int, order: int) -> complex:
    """``(d/dx(u))^order (X + y(u))^(-p)`` with exact derivatives of ``x``."""
    u = complex(u)
    yv = complex(curve.y(u))
    y1, y2 = (complex(curve.y_deriv(u, m)) for m in (1, 2))
    x1, x2 = complex(curve.x_deriv(u, 1)), complex(curve.x_deriv(u, 2))
    b = X + yv
    g1 = -p * y1 * b ** (-p - 1)
    if order == 1:
        return g1 / x1
    g2 = -p * y2 * b ** (-p - 1) + p * (p + 1) * y1**2 * b ** (-p - 2)
    return g2 / x1**2 - g1 * x2 / x1**3


def _genus_one_brace(curve, X, u, ev, eng) -> complex:
    yv = complex(curve.y(complex(u)))
    b = X + yv
    reg = complex(eng.regularized_diagonal(complex(u)))
    return (curve.lam**2 * reg / b**3 - curve.lam * ev(1, u, ()) / b**2
            + curve.lam**2 / (2 * b**2) * _dx_inverse_power(curve, X, u, 1, 2))


def _check_us(us, limit=None):
    us = tuple(complex(u) for u in us)
    if limit is not None and len(us) > limit:
        raise StabilityViolation(f"at most {limit} insertions supported here")
    return us


# ---------------------------------------------------------------------------
# genus zero


def check_linear_g0(curve: SpectralCurve, z: complex, us: Sequence[complex],
                    cache: EvalCache | None = None, settings: RecursionSettings | None = None,
                    evaluator: Evaluator | None = None) -> LoopEqReport:
    """Fiber sum of ``W^(0)_{|I|+1}`` against its insertion expansion."""
    us = _check_us(us)
    if not us:
        raise StabilityViolation("the planar linear loop equation needs |I| >= 1")
    ev = _evaluator(curve, cache, settings, evaluator)
    X = complex(curve.x(complex(z)))
    lhs = sum(ev(0, t, us) for t in _fiber(curve, z))
    terms = {}
    if len(us) == 1:
        terms["delta"] = 1 / (X - complex(curve.x(us[0])))
    terms["insert"] = -sum(
        loop_insert_power(curve, uj, 1, X, us[:j] + us[j + 1:], evaluator=ev)
        for j, uj in enumerate(us))
    return LoopEqReport("lin_g0", (z,) + us, lhs, sum(terms.values()), terms)


def check_quadratic_g0(curve: SpectralCurve, z: complex, us: Sequence[complex],
                       cache: EvalCache | None = None, settings: RecursionSettings | None = None,
                       evaluator: Evaluator | None = None) -> LoopEqReport:
    """Fiber sum of ``-y W^(0)_{|I|+1}`` against products, insertions and fixed-point terms."""
    us = _check_us(us)
    if not us:
        raise StabilityViolation("the planar quadratic loop equation needs |I| >= 1")
    ev = _evaluator(curve, cache, settings, evaluator)
    lam, n = curve.lam, len(us)
    X = complex(curve.x(complex(z)))
    fib = _fiber(curve, z)
    lhs = -sum(complex(curve.y(t)) * ev(0, t, us) for t in fib)
    terms = {}
    terms["pairs"] = lam / 2 * sum(ev(0, t, i1) * ev(0, t, i2)
                                   for i1, i2 in _splittings(us) if i1 and i2 for t in fib)
    terms["insert"] = -sum(
        complex(curve.x(uj)) * loop_insert_power(curve, uj, 1, X, us[:j] + us[j + 1:], evaluator=ev)
        for j, uj in enumerate(us))
    terms["fixed_points"] = curve.c * sum(
        rk * ev(0, ek, us) / (X - complex(curve.x(ek))) for rk, ek in zip(curve.r, curve.eps))
    if n == 1:
        terms["delta"] = -complex(curve.y(us[0])) / (X - complex(curve.x(us[0])))
    else:
        terms["diagonal"] = -lam * sum(ev(0, uj, us[:j] + us[j + 1:]) / (X - complex(curve.x(uj)))
                                       for j, uj in enumerate(us))
    return LoopEqReport("quad_g0", (z,) + us, lhs, sum(terms.values()), terms)


# ---------------------------------------------------------------------------
# genus one


def check_linear_g1(curve: SpectralCurve, z: complex, us: Sequence[complex] = (),
                    cache: EvalCache | None = None, settings: RecursionSettings | None = None,
                    evaluator: Evaluator | None = None) -> LoopEqReport:
    """Fiber sum of ``W^(1)_{|I|+1}`` for ``|I| <= 1``."""
    us = _check_us(us, limit=1)
    eng = _engine(curve, cache, settings)
    ev = _evaluator(curve, cache, settings, evaluator)
    lam, x0 = curve.lam, curve.x0
    X = complex(curve.x(complex(z)))
    lhs = sum(ev(1, t, us) for t in _fiber(curve, z))
    terms = {}
    if not us:
        terms["x0"] = -lam / (8 * (X - x0) ** 3)
    else:
        u = us[0]
        dx0 = _x0_insertion(curve, u, ev)
        terms["x0"] = -3 * lam * dx0 / (8 * (X - x0) ** 4)
        terms["brace"] = -_genus_one_brace(curve, X, u, ev, eng)
    return LoopEqReport("lin_g1", (z,) + us, lhs, sum(terms.values()), terms)


def check_quadratic_g1(curve: SpectralCurve, z: complex, us: Sequence[complex] = (),
                       cache: EvalCache | None = None, settings: RecursionSettings | None = None,
                       evaluator: Evaluator | None = None) -> LoopEqReport:
    """Fiber sum of ``-y W^(1)_{|I|+1}`` for ``|I| <= 1``.

    Terms: ``pairs`` (genus-one times planar products), ``diag`` (regularised
    diagonal with insertions), ``dagger`` (``x(u)``-derivative of the cubed
    inverse), ``x0`` (terms through ``x(0)``), ``brace`` (``x(u)`` times the
    linear-equation brace), ``fixed_points`` and ``diagonal``.
    """
    us = _check_us(us, limit=1)
    eng = _engine(curve, cache, settings)
    ev = _evaluator(curve, cache, settings, evaluator)
    lam, x0 = curve.lam, curve.x0
    X = complex(curve.x(complex(z)))
    fib = _fiber(curve, z)
    lhs = -sum(complex(curve.y(t)) * ev(1, t, us) for t in fib)
    terms = {}
    terms["diag"] = lam / 2 * complex(np.sum(eng.regularized_diagonal(fib, us)))
    if not us:
        terms["x0"] = lam / (8 * (X - x0) ** 2) - X * lam / (8 * (X - x0) ** 3)
    else:
        u = us[0]
        terms["pairs"] = lam * sum(ev(1, t, ()) * ev(0, t, us) for t in fib)
        terms["dagger"] = -lam**2 / 6 * _dx_inverse_power(curve, X, u, 3, 1)
        dx0 = _x0_insertion(curve, u, ev)
        terms["x0"] = (2 * lam * dx0 / (8 * (X - x0) ** 3)
                       - X * 3 * lam * dx0 / (8 * (X - x0) ** 4))
        terms["brace"] = -complex(curve.x(u)) * _genus_one_brace(curve, X, u, ev, eng)
        terms["diagonal"] = -lam * ev(1, u, ()) / (X - complex(curve.x(u)))
    terms["fixed_points"] = curve.c * sum(
        rl * ev(1, el, us) / (X - complex(curve.x(el))) for rl, el in zip(curve.r, curve.eps))
    return LoopEqReport("quad_g1", (z,) + us, lhs, sum(terms.values()), terms)


# ---------------------------------------------------------------------------
# pole structure


def check_residue_vanishing(curve: SpectralCurve, g: int, us: Sequence[complex], center: complex,
                            cache: EvalCache | None = None,
                            settings: RecursionSettings | None = None,
                            expected: complex = 0) -> LoopEqReport:
    """Residue of ``x'(z) W^(g)(z; I) dz`` at ``center`` by a direct contour in ``z``.

    ``center`` is ``-u_j`` (any genus) or ``0`` (genus one); ``expected`` lets
    the same routine serve control computations with a known nonzero residue.
    """
    us = _check_us(us)
    eng = _engine(curve, cache, settings)
    cs = eng.settings.contour
    sing = list(curve.special_points) + list(curve.beta_fiber_points)
    for u in us:
        sing += [u, -u] + list(-curve.fiber(np.asarray(u)))
    center = complex(center)
    r = safe_radius(center, sing, cs.safety)

    def f(zz):
        return curve.xp(zz) * eng.w(g, zz, us)

    res = laurent_coeff(f, Disk(center, r), -1, cs)
    return LoopEqReport("residue", (center,) + us, res, expected)


# ---------------------------------------------------------------------------
# closed-form identities


def check_closedforms(curve: SpectralCurve, z: complex, w: complex) -> list:
    """Planar one- and two-boundary identities at the generic pair ``(z, w)``."""
    z, w = complex(z), complex(w)
    x, y = curve.x, curve.y
    xe = curve.x(curve.eps)
    reports = []
    lhs = (x(w) + y(z)) * cf.u01(curve, z, w) + curve.c * sum(
        rk * cf.u01(curve, ek, w) / (x(z) - xk) for rk, ek, xk in zip(curve.r, curve.eps, xe))
    reports.append(LoopEqReport("dse_u0", (z, w), lhs, 1.0))
    reports.append(LoopEqReport("sym_u01", (z, w), cf.u01(curve, z, w), cf.u01(curve, w, z)))
    reports.append(LoopEqReport("diag_u01", (z,), cf.u01(curve, z, z), cf.u01_diag(curve, z)))
    lhs = (x(z) + y(z)) * cf.v01(curve, z, w) + curve.c * sum(
        rk * cf.v01(curve, ek, w) / (x(z) - xk) for rk, ek, xk in zip(curve.r, curve.eps, xe))
    rhs = -curve.lam * (cf.u01(curve, z, w) - cf.u01_diag(curve, w)) / (x(w) - x(z))
    reports.append(LoopEqReport("dse_v0", (z, w), lhs, rhs))
    reports.append(LoopEqReport("sym_p01", (z, w), cf.p01(curve, x(w), z), cf.p01(curve, x(z), w)))
    reports.append(LoopEqReport("qhat_identity", (w, z), cf.qhat01(curve, x(w), x(z)) ** 2,
                                cf.qhat01_square_rhs(curve, w, z)))
    return reports


def require_lambda(curve: SpectralCurve) -> None:
    """Loop equations degenerate at ``lambda = 0``; reject that case explicitly."""
    if curve.degenerate:
        raise BadConfig("loop equations need lambda != 0")
