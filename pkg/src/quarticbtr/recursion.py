"""Residue engine for the correlators ``W^(g)_{n+1}(z; u_1..u_n)``, ``g <= 1``.

Every stable correlator is a sum of residues

    x'(z) W(z; I) = sum_c Res_{q -> c} K_c(z, q) G_c(q) dq

over the ramification points ``beta_i`` (kernel
``1/(z - q) - 1/(z - sigma_i(q))``), the reflected arguments ``-u_j`` (kernel
``1/(z - q) - 1/(z + u_j)``) and, for genus one, the origin (kernel
``1/(z - q) - 1/z``).  The integrands ``G_c`` do not depend on ``z``, so each
residue is stored as a *plan*: the principal part of ``G_c`` at ``c`` (from
trapezoidal samples on a circle) folded with the Taylor coefficients of the
kernel in ``q``.  Evaluating a plan at ``z`` is then a polynomial in
``1/(z - c)``, and any number of ``z`` values cost next to nothing.

The integrands are

* at ``beta_i``: ``-lam x'(q) / (2 (y(q) - y(sigma_i(q)))) * (S + D)``,
* at ``-u_j``: ``-lam x'(q) / (2 (y(q) + x(u_j))) * (S + D + lam/6 d^2_{x(q)} T_j)``,
* at ``0``: ``-lam x'(q) / (y(q) + x(q)) * (w S + D/2 + d_{x(q)} R / 4)``,

with ``S`` the ordered sum over stable splittings, and for genus one
``D = d_{x(s)} W^(0)(q; I + s)|_{s=q}`` (the regularised diagonal of the
planar two-point density when ``I`` is empty),
``T_j = d_{x(u_j)} W^(0)(q; I)`` and ``R = W^(0)(q; I + q)`` (its regular
limit when ``I`` is empty).  The weight ``w`` of ``S`` at the origin is
``1/2``: the genus-one quadratic loop equation with one insertion fails
(residual ~1e-3) with weight ``1``, and holds to rounding with ``1/2``.  The
weight is exposed as :attr:`RecursionSettings.origin_pair_weight`.

All arrays carry a leading batch axis so that derivative circles, which need
one plan per sample point, are built in a handful of vectorised passes.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .contour import (MIN_RADIUS, ContourSettings, circle_nodes, principal_part,
                      spectral_tail, unit_roots)
from .curve import SpectralCurve
from .errors import (DegenerateGeometry, NonConvergence, RamificationPoint,
                     StabilityViolation)

log = logging.getLogger(__name__)

NORMALIZATIONS = ("scaled_u", "unscaled_x")


@dataclass(frozen=True)
class RecursionSettings:
    """Engine controls.

    Attributes
    ----------
    contour : ContourSettings
    tau_sep : float
        Minimal separation between arguments and special points.
    lambda_normalization : str
        ``"scaled_u"``: densities carry ``lam**(2g+n-1)`` and derivatives in
        ``u_j``; ``"unscaled_x"``: no power of ``lam`` and derivatives in ``x(u_j)``.
    origin_pair_weight : float
        Weight of the stable-pair sum in the origin residue (see module docs).
    trunc_tol : float
        Principal-part coefficients below ``trunc_tol * max|G|`` (in units of
        the circle radius) are dropped.
    chunk_points : int
        Upper bound on integrand samples processed in one vectorised pass.
    """

    contour: ContourSettings = field(default_factory=ContourSettings)
    tau_sep: float = 1e-6
    lambda_normalization: str = "scaled_u"
    origin_pair_weight: float = 0.5
    trunc_tol: float = 1e-15
    chunk_points: int = 400_000

    def __post_init__(self):
        if self.lambda_normalization not in NORMALIZATIONS:
            raise ValueError(f"lambda_normalization must be one of {NORMALIZATIONS}")


@dataclass(frozen=True)
class CorrelatorQuery:
    """A request for ``W^(g)_{n+1}(z; us)``."""

    g: int
    z: complex
    us: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "z", complex(self.z))
        object.__setattr__(self, "us", tuple(complex(u) for u in self.us))
        if self.g not in (0, 1):
            raise StabilityViolation("only genus 0 and 1 are supported")

    @property
    def n(self) -> int:
        return len(self.us)

    @property
    def key(self) -> tuple:
        return (self.g, self.n, self.z, self.us)

    def validate(self, curve: SpectralCurve, tau_sep: float) -> None:
        """Check stability and generic position; raise on violation."""
        if 2 * self.g + self.n < 2 and not (self.g == 0 and self.n <= 1):
            raise StabilityViolation(f"(g, n) = ({self.g}, {self.n}) is not computable")
        pts = (self.z,) + self.us
        for a, b in itertools.combinations(pts, 2):
            if abs(a - b) < tau_sep or abs(a + b) < tau_sep:
                raise DegenerateGeometry(f"arguments {a} and {b} are not in generic position")
        forbidden = np.concatenate([curve.beta, -curve.eps, [0.0]])
        for p in pts:
            if np.any(np.abs(p - forbidden) < tau_sep):
                raise DegenerateGeometry(f"argument {p} sits on a special point")


class EvalCache:
    """Memo of correlator values and residue plans for one curve.

    Values are keyed by ``(g, n, z, us)`` with bit-exact complex entries; plans
    by ``(g, us)``.  ``get_or_insert`` is the only mutation path.
    """

    def __init__(self):
        self.values: dict = {}
        self.plans: dict = {}

    def get_or_insert(self, store: dict, key, make):
        try:
            return store[key]
        except KeyError:
            val = make()
            return store.setdefault(key, val)

    def __len__(self) -> int:
        return len(self.values)


# ---------------------------------------------------------------------------
# closed forms


def w_base(curve: SpectralCurve, z, u=None):
    """``W^(0)_1(z) = y(z)/lam`` or ``W^(0)_2(z; u) = (1/(z-u) - 1/(z+u)) / x'(z)``."""
    z = np.asarray(z, dtype=complex)
    if u is None:
        if curve.lam == 0:
            raise ValueError("W^(0)_1 needs lambda != 0")
        return curve.y(z) / curve.lam
    u = np.asarray(u, dtype=complex)
    return (1 / (z - u) - 1 / (z + u)) / curve.xp(z)


def omega02(curve: SpectralCurve, q, u):
    """``d_{x(u)} W^(0)_2(q; u) = (1/(q-u)^2 + 1/(q+u)^2) / (x'(q) x'(u))``."""
    q, u = np.asarray(q, dtype=complex), np.asarray(u, dtype=complex)
    return (1 / (q - u) ** 2 + 1 / (q + u) ** 2) / (curve.xp(q) * curve.xp(u))


def omega02_reg(curve: SpectralCurve, q):
    """Regularised diagonal of the planar two-point density.

    ``lim_{s->q} [omega02(q, s) - 1/(x(q) - x(s))^2]
    = 1/(4 q^2 x'^2) + (x''^2/4 - x' x'''/6) / x'^4``, with exact derivatives of ``x``.
    """
    q = np.asarray(q, dtype=complex)
    x1, x2, x3 = (curve.x_deriv(q, m) for m in (1, 2, 3))
    if np.any(np.abs(x1) < 1e-8):
        raise RamificationPoint("omega02_reg at a ramification point")
    return 1 / (4 * q**2 * x1**2) + (x2**2 / 4 - x1 * x3 / 6) / x1**4


def w02_reg_diag(curve: SpectralCurve, q):
    """``lim_{w->q} [W^(0)_2(q; w) - 1/(x(q) - x(w))] = -1/(2 q x') - x''/(2 x'^2)``."""
    q = np.asarray(q, dtype=complex)
    x1, x2 = curve.x_deriv(q, 1), curve.x_deriv(q, 2)
    return -1 / (2 * q * x1) - x2 / (2 * x1**2)


def w02_reg_diag_dx(curve: SpectralCurve, q):
    """``d/dx(q)`` of :func:`w02_reg_diag`."""
    q = np.asarray(q, dtype=complex)
    x1, x2, x3 = (curve.x_deriv(q, m) for m in (1, 2, 3))
    dq = 1 / (2 * q**2 * x1) + x2 / (2 * q * x1**2) - x3 / (2 * x1**2) + x2**2 / x1**3
    return dq / x1


# ---------------------------------------------------------------------------
# plans


class Plan:
    """Residue data of one correlator for a batch of argument tuples.

    Attributes
    ----------
    g : int
    us : tuple of ndarray, each of shape (B,)
    centers : list of (ndarray (B,), ndarray (B, P))
        Residue centers and the coefficients ``b_k`` of
        ``sum_k b_k (z - c)^{-(k+1)}``.
    """

    def __init__(self, curve, g, us, centers):
        self.curve = curve
        self.g = g
        self.us = us
        self.centers = centers

    @property
    def batch(self) -> int:
        return len(self.centers[0][0]) if self.centers else 1

    def subset(self, sel) -> "Plan":
        return Plan(self.curve, self.g, tuple(u[sel] for u in self.us),
                    [(c[sel], b[sel]) for c, b in self.centers])

    def residue_sum(self, z) -> np.ndarray:
        """``x'(z) W(z)`` for ``z`` of shape ``(B, K)`` (or ``(K,)`` when ``B == 1``)."""
        z = np.asarray(z, dtype=complex)
        squeeze = z.ndim == 1
        if squeeze:
            z = z[None, :]
        total = np.zeros(z.shape, dtype=complex)
        for c, b in self.centers:
            w = 1 / (z - c[:, None])
            acc = np.zeros(z.shape, dtype=complex)
            for k in range(b.shape[1] - 1, -1, -1):
                acc = (acc + b[:, k : k + 1]) * w
            total += acc
        return total[0] if squeeze else total

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return self.residue_sum(z) / self.curve.xp(z)


def _subsets(n: int):
    """Bitmasks of all subsets of ``range(n)``."""
    return range(1 << n)


def _members(mask: int, n: int) -> tuple:
    return tuple(j for j in range(n) if mask >> j & 1)


class Engine:
    """Evaluator of ``W^(g)_{n+1}`` on one curve with a shared cache.

    Parameters
    ----------
    curve : SpectralCurve
    settings : RecursionSettings, optional
    cache : EvalCache, optional
    """

    def __init__(self, curve: SpectralCurve, settings: RecursionSettings | None = None,
                 cache: EvalCache | None = None):
        if curve.degenerate:
            raise ValueError("the recursion needs lambda != 0")
        self.curve = curve
        self.settings = settings or RecursionSettings()
        self.cache = cache if cache is not None else EvalCache()
        self._base_sing = np.concatenate([curve.special_points, curve.beta_fiber_points])

    # -- public scalar interface --------------------------------------------
    def w(self, g: int, z, us: Sequence[complex] = ()):
        """``W^(g)_{n+1}(z; us)`` for scalar arguments ``us``; ``z`` may be an array."""
        us = tuple(complex(u) for u in us)
        z = np.asarray(z, dtype=complex)
        n = len(us)
        if g == 0 and n == 0:
            return w_base(self.curve, z)
        if g == 0 and n == 1:
            return w_base(self.curve, z, us[0])
        if 2 * g + n < 2 or g > 1:
            raise StabilityViolation(f"(g, n) = ({g}, {n}) out of range")
        plan = self.plan(g, us)
        flat = z.reshape(-1)
        return plan(flat).reshape(z.shape)

    def plan(self, g: int, us: tuple) -> Plan:
        """Cached plan for scalar arguments."""
        key = (g, tuple(complex(u) for u in us))
        return self.cache.get_or_insert(
            self.cache.plans, key,
            lambda: self._build_plan(g, tuple(np.array([complex(u)]) for u in us)))

    def evaluate(self, query: CorrelatorQuery) -> complex:
        """Validated, memoised scalar evaluation."""
        query.validate(self.curve, self.settings.tau_sep)
        return self.cache.get_or_insert(
            self.cache.values, query.key,
            lambda: complex(self.w(query.g, query.z, query.us)))

    def regularized_diagonal(self, q, us: Sequence[complex] = ()):
        """``Omega02_reg(q, q)`` for empty ``us``, else ``d_{x(s)} W^(0)(q; us + s)|_{s=q}``."""
        q = np.asarray(q, dtype=complex)
        if not us:
            return omega02_reg(self.curve, q)
        ub = tuple(np.array([complex(u)]) for u in us)
        flat = q.reshape(1, -1)
        return self._insert_derivative(ub, np.arange(1), flat).reshape(q.shape)

    # -- batched evaluation ---------------------------------------------------
    def w_batch(self, g: int, z, us: tuple) -> np.ndarray:
        """``W`` for batched arguments: ``us`` entries of shape (B,), ``z`` of shape (B, K)."""
        z = np.asarray(z, dtype=complex)
        n = len(us)
        if g == 0 and n == 0:
            return w_base(self.curve, z)
        if g == 0 and n == 1:
            return w_base(self.curve, z, us[0][:, None])
        if n == 0 or all(np.all(u == u[0]) for u in us):
            # identical arguments across the batch: one cached scalar plan
            plan = self.plan(g, tuple(u[0] for u in us))
            return plan(z.reshape(-1)).reshape(z.shape)
        return self._build_plan(g, us)(z)

    # -- plan construction ----------------------------------------------------
    def _build_plan(self, g: int, us: tuple) -> Plan:
        n = len(us)
        if 2 * g + n < 2:
            raise StabilityViolation(f"(g, n) = ({g}, {n}) has no residue formula")
        B = len(us[0]) if n else 1
        ncent = len(self.curve.beta) + n + (g == 1)
        per = max(1, self.settings.chunk_points // (ncent * self.settings.contour.base_nodes
                                                     * self._inner_factor(g, n)))
        if B <= per:
            return self._build_plan_chunk(g, us)
        parts = [self._build_plan_chunk(g, tuple(u[i:i + per] for u in us))
                 for i in range(0, B, per)]
        centers = []
        for k in range(len(parts[0].centers)):
            cs = np.concatenate([p.centers[k][0] for p in parts])
            width = max(p.centers[k][1].shape[1] for p in parts)
            bs = np.concatenate([np.pad(p.centers[k][1], ((0, 0), (0, width - p.centers[k][1].shape[1])))
                                 for p in parts])
            centers.append((cs, bs))
        return Plan(self.curve, g, us, centers)

    def _inner_factor(self, g: int, n: int) -> int:
        """Rough number of inner samples per outer node (for chunking)."""
        if g == 0:
            return 1 + n
        m = self.settings.contour.deriv_nodes
        return 1 + (m if n else 0) * (len(self.curve.beta) + n + 1)

    def _singular_points(self, us: tuple) -> np.ndarray:
        """Per-batch singular set, shape (B, M)."""
        B = len(us[0]) if us else 1
        cols = [np.broadcast_to(self._base_sing, (B, len(self._base_sing)))]
        for u in us:
            cols.append(np.stack([u, -u], axis=1))
            cols.append(-self.curve.fiber(u))
        return np.concatenate(cols, axis=1)

    def _radius(self, c: np.ndarray, sing: np.ndarray, cap=None) -> np.ndarray:
        dist = np.abs(sing - c[:, None])
        dist = np.where(dist > 1e-14 * (1 + np.abs(c[:, None])), dist, np.inf)
        dmin = dist.min(axis=1)
        if np.any(dmin < MIN_RADIUS):
            raise DegenerateGeometry(f"singular points within {dmin.min():.2e} of a residue center")
        r = self.settings.contour.safety * dmin
        if cap is not None:
            r = np.minimum(r, cap)
        return r

    def _build_plan_chunk(self, g: int, us: tuple) -> Plan:
        curve, n = self.curve, len(us)
        B = len(us[0]) if n else 1
        sing = self._singular_points(us)
        subplans: dict = {}
        centers = []
        for i, b in enumerate(curve.beta):
            c = np.full(B, b, dtype=complex)
            r = self._radius(c, sing, cap=curve.sigma_radius(i))
            a = self._principal(lambda q, sel, i=i: self._integrand_beta(g, us, sel, q, i, subplans), c, r)
            cmat = curve.sigma_power_matrix(i, a.shape[1])
            centers.append((c, a - a @ cmat.T))
        for j in range(n):
            c = -us[j]
            r = self._radius(c, sing)
            a = self._principal(lambda q, sel, j=j: self._integrand_reflect(g, us, sel, q, j, subplans), c, r)
            a[:, 0] = 0
            centers.append((c, a))
        if g == 1:
            c = np.zeros(B, dtype=complex)
            r = self._radius(c, sing)
            a = self._principal(lambda q, sel: self._integrand_origin(us, sel, q, subplans), c, r)
            a[:, 0] = 0
            centers.append((c, a))
        return Plan(curve, g, us, centers)

    def _principal(self, integrand, c: np.ndarray, r: np.ndarray) -> np.ndarray:
        """Principal part at ``c`` with per-element node doubling on the spectral tail."""
        cs = self.settings.contour
        B = len(c)
        results: dict = {}
        todo = np.arange(B)
        nodes = cs.base_nodes
        while True:
            q = circle_nodes(c[todo], r[todo], nodes)
            vals = integrand(q, todo)
            if not np.all(np.isfinite(vals)):
                raise DegenerateGeometry("non-finite integrand on a residue circle")
            tail = spectral_tail(vals)
            ok = tail <= cs.agree_tol
            if nodes >= cs.max_nodes:
                if not np.all(ok):
                    raise NonConvergence(f"residue circle unresolved at {cs.max_nodes} nodes "
                                         f"(tail {tail.max():.2e})")
            pmax = nodes // 2 - nodes // 8 - 1
            pp = principal_part(vals, r[todo], pmax)
            scale = np.max(np.abs(vals), axis=1)
            # truncate modes that are rounding noise
            normed = np.abs(pp) / (r[todo, None] ** np.arange(1, pmax + 1))
            live = normed > self.settings.trunc_tol * scale[:, None]
            for row, idx in enumerate(todo):
                if ok[row] or nodes >= cs.max_nodes:
                    keep = np.flatnonzero(live[row])
                    last = keep.max() + 1 if keep.size else 1
                    results[idx] = pp[row, :last]
            todo = todo[~ok] if nodes < cs.max_nodes else todo[:0]
            if todo.size == 0:
                break
            nodes *= 2
        width = max(len(v) for v in results.values())
        out = np.zeros((B, width), dtype=complex)
        for idx, v in results.items():
            out[idx, : len(v)] = v
        return out

    # -- building blocks of the integrands -------------------------------------
    def _sub_w(self, g: int, mask: int, us: tuple, sel, q, subplans: dict):
        """``W^(g)(q; I_mask)`` at nodes ``q`` of shape (b, m) for batch subset ``sel``."""
        n = len(us)
        idx = _members(mask, n)
        sub = tuple(us[j][sel] for j in idx)
        if g == 0 and len(idx) <= 1:
            return self.w_batch(0, q, sub)
        key = (g, mask)
        if key not in subplans:
            full = tuple(us[j] for j in idx)
            if len(idx) == 0 or all(np.all(u == u[0]) for u in full):
                subplans[key] = ("scalar", self.plan(g, tuple(u[0] for u in full)))
            else:
                subplans[key] = ("batch", self._build_plan(g, full))
        kind, plan = subplans[key]
        if kind == "scalar":
            return plan(q.reshape(-1)).reshape(q.shape)
        return plan.subset(sel)(q)

    def stable_pair_sum(self, g: int, us: tuple, sel, q, subplans: dict):
        """Ordered sum of ``W^(g1)(q; I1) W^(g2)(q; I2)`` over stable splittings."""
        n = len(us)
        full = (1 << n) - 1
        total = np.zeros(q.shape, dtype=complex)
        for m1 in _subsets(n):
            m2 = full ^ m1
            for g1 in range(g + 1):
                g2 = g - g1
                if (g1 == 0 and m1 == 0) or (g2 == 0 and m2 == 0):
                    continue
                total += (self._sub_w(g1, m1, us, sel, q, subplans)
                          * self._sub_w(g2, m2, us, sel, q, subplans))
        return total

    def _circle_radius(self, q: np.ndarray, pts: list, cap=None) -> np.ndarray:
        """Derivative-circle radius around each ``q`` avoiding the listed points.

        Entries of ``pts`` are scalars, 1-d arrays of points shared by the whole
        batch, or arrays broadcastable against ``q`` (per-element points).
        """
        dmin = np.full(q.shape, np.inf)
        for p in pts:
            p = np.asarray(p, dtype=complex)
            if p.ndim == q.ndim or p.ndim == 0:
                dmin = np.minimum(dmin, np.abs(q - p))
            else:
                d = np.abs(q[..., None] - p)
                dmin = np.minimum(dmin, d.min(axis=-1))
        if np.any(dmin < MIN_RADIUS):
            raise DegenerateGeometry("derivative circle collapsed")
        r = self.settings.contour.safety * dmin
        return r if cap is None else np.minimum(r, cap)

    def _insert_derivative(self, us: tuple, sel, q):
        """``d_{x(s)} W^(0)(q; I + s)|_{s=q}`` at nodes ``q`` (shape (b, m)), ``I`` nonempty."""
        curve, M = self.curve, self.settings.contour.deriv_nodes
        ub = [u[sel][:, None] for u in us]
        pts = [curve.beta, -q, 0.0, curve.eps, -curve.eps] + [u for u in ub] + [-u for u in ub]
        rho = self._circle_radius(q, pts)
        s = q[..., None] + rho[..., None] * unit_roots(M)
        bshape = s.shape
        inner_us = tuple(np.broadcast_to(u[..., None], bshape).reshape(-1) for u in ub) + (s.reshape(-1),)
        zq = np.broadcast_to(q[..., None], bshape).reshape(-1, 1)
        vals = self._build_plan(0, inner_us)(zq).reshape(bshape)
        deriv = np.mean(vals * unit_roots(M).conj(), axis=-1) / rho
        return deriv / curve.xp(q)

    def _diag_dx(self, us: tuple, sel, q):
        """``d_{x(q)} W^(0)(q; I + q)`` at nodes ``q``, ``I`` nonempty."""
        curve, M = self.curve, self.settings.contour.deriv_nodes
        ub = [u[sel][:, None] for u in us]
        pts = [curve.beta, 0.0, curve.eps, -curve.eps] + [u for u in ub] + [-u for u in ub]
        rho = self._circle_radius(q, pts)
        t = q[..., None] + rho[..., None] * unit_roots(M)
        bshape = t.shape
        inner_us = tuple(np.broadcast_to(u[..., None], bshape).reshape(-1) for u in ub) + (t.reshape(-1),)
        vals = self._build_plan(0, inner_us)(t.reshape(-1, 1)).reshape(bshape)
        deriv = np.mean(vals * unit_roots(M).conj(), axis=-1) / rho
        return deriv / curve.xp(q)

    def _tail_term(self, us: tuple, sel, q, j: int):
        """``d^2_{x(q)} T_j`` with ``T_j(q) = d_{x(u_j)} W^(0)(q; I)`` at nodes ``q``."""
        curve, M = self.curve, self.settings.contour.deriv_nodes
        n = len(us)
        ub = [u[sel][:, None] for u in us]
        pts = [curve.beta, 0.0, curve.eps, -curve.eps] + [u for u in ub] + [-u for u in ub]
        rho = self._circle_radius(q, [p for p in pts])
        qq = q[..., None] + rho[..., None] * unit_roots(M)  # (b, m, M)
        if n == 1:
            tvals = omega02(curve, qq, ub[0][..., None])
        else:
            tvals = self._u_derivative(us, sel, qq, j)
        w = unit_roots(M)
        d1 = np.mean(tvals * w.conj(), axis=-1) / rho
        d2 = 2 * np.mean(tvals * w.conj() ** 2, axis=-1) / rho**2
        x1, x2 = curve.x_deriv(q, 1), curve.x_deriv(q, 2)
        return d2 / x1**2 - d1 * x2 / x1**3

    def _u_derivative(self, us: tuple, sel, qq, j: int):
        """``d_{x(u_j)} W^(0)(q'; I)`` for points ``qq`` of shape (b, m, M)."""
        curve, M = self.curve, self.settings.contour.deriv_nodes
        uj = us[j][sel]
        others = [us[k][sel] for k in range(len(us)) if k != j]
        flatq = qq.reshape(len(uj), -1)
        pts = [curve.beta, 0.0, curve.eps, -curve.eps, flatq, -flatq]
        pts += [o[:, None] for o in others] + [-o[:, None] for o in others]
        dmin = np.full(uj.shape, np.inf)
        for p in pts:
            d = np.abs(uj[:, None] - np.asarray(p, dtype=complex).reshape(
                (len(uj), -1) if np.ndim(p) == 2 else (1, -1)))
            dmin = np.minimum(dmin, d.min(axis=1))
        rho = self.settings.contour.safety * dmin
        up = uj[:, None] + rho[:, None] * unit_roots(M)  # (b, M)
        b = len(uj)
        inner = []
        for k in range(len(us)):
            if k == j:
                inner.append(up.reshape(-1))
            else:
                inner.append(np.repeat(us[k][sel], M))
        zq = np.repeat(flatq, M, axis=0)  # (b*M, m*M')
        vals = self._build_plan(0, tuple(inner))(zq).reshape(b, M, -1)
        deriv = np.einsum("bmk,m->bk", vals, unit_roots(M).conj()) / M / rho[:, None]
        return deriv.reshape(qq.shape) / curve.xp(uj)[:, None, None]

    # -- integrands ----------------------------------------------------------------
    def _genus_one_diag(self, us: tuple, sel, q):
        if len(us) == 0:
            return omega02_reg(self.curve, q)
        return self._insert_derivative(us, sel, q)

    def _integrand_beta(self, g, us, sel, q, i, subplans):
        curve = self.curve
        bracket = self.stable_pair_sum(g, us, sel, q, subplans)
        if g == 1:
            bracket = bracket + self._genus_one_diag(us, sel, q)
        sq = curve.sigma(i, q)
        return -curve.lam * curve.xp(q) / (2 * (curve.y(q) - curve.y(sq))) * bracket

    def _integrand_reflect(self, g, us, sel, q, j, subplans):
        curve = self.curve
        bracket = self.stable_pair_sum(g, us, sel, q, subplans)
        if g == 1:
            bracket = (bracket + self._genus_one_diag(us, sel, q)
                       + curve.lam / 6 * self._tail_term(us, sel, q, j))
        xu = curve.x(us[j][sel])[:, None]
        return -curve.lam * curve.xp(q) / (2 * (curve.y(q) + xu)) * bracket

    def _integrand_origin(self, us, sel, q, subplans):
        curve = self.curve
        pair = self.stable_pair_sum(1, us, sel, q, subplans)
        if len(us) == 0:
            diag_dx = w02_reg_diag_dx(curve, q)
        else:
            diag_dx = self._diag_dx(us, sel, q)
        bracket = (self.settings.origin_pair_weight * pair
                   + 0.5 * self._genus_one_diag(us, sel, q) + 0.25 * diag_dx)
        return -curve.lam * curve.xp(q) / (curve.y(q) + curve.x(q)) * bracket


# ---------------------------------------------------------------------------
# module-level operations


def _engine(curve, cache, settings) -> Engine:
    cache = cache if cache is not None else EvalCache()
    eng = getattr(cache, "_engine", None)
    if eng is None or eng.curve is not curve or (settings is not None and eng.settings != settings):
        eng = Engine(curve, settings, cache)
        cache._engine = eng
    return eng


def stable_pair_sum(curve: SpectralCurve, g: int, q: complex, us: Sequence[complex],
                    cache: EvalCache | None = None,
                    settings: RecursionSettings | None = None) -> complex:
    """Ordered sum over stable splittings at a single point ``q``."""
    eng = _engine(curve, cache, settings)
    ub = tuple(np.array([complex(u)]) for u in us)
    qq = np.array([[complex(q)]])
    return complex(eng.stable_pair_sum(g, ub, np.arange(1), qq, {})[0, 0])


def w_eval(curve: SpectralCurve, query: CorrelatorQuery, cache: EvalCache | None = None,
           settings: RecursionSettings | None = None) -> complex:
    """``W^(g)_{n+1}(z; us)`` for a validated query."""
    return _engine(curve, cache, settings).evaluate(query)


def omega_eval(curve: SpectralCurve, g: int, points: Sequence[complex],
               cache: EvalCache | None = None,
               settings: RecursionSettings | None = None) -> complex:
    """Scalar density of ``omega^(g)_{n+1}(z, u_1..u_n)``.

    ``scaled_u``: ``lam^(2g+n-1) x'(z) d^n W / du_1...du_n``.
    ``unscaled_x``: ``x'(z) d^n W / dx(u_1)...dx(u_n)``.
    Mixed partials come from nested derivative circles around each ``u_j``.
    """
    eng = _engine(curve, cache, settings)
    settings = eng.settings
    pts = [complex(p) for p in points]
    z, us = pts[0], pts[1:]
    n = len(us)
    CorrelatorQuery(g, z, us).validate(curve, settings.tau_sep)
    M = settings.contour.deriv_nodes
    if n == 0:
        val = curve.xp(z) * eng.w(g, z, ())
    else:
        radii = []
        for j, u in enumerate(us):
            avoid = [z, -z] + [v for k, v in enumerate(us) if k != j] + [-v for k, v in enumerate(us) if k != j]
            avoid += list(curve.beta) + [0.0, -u] + list(curve.eps) + list(-curve.eps)
            d = min(abs(u - a) for a in avoid)
            radii.append(settings.contour.safety * d / max(1, n))
        w = unit_roots(M)
        grids = np.meshgrid(*[u + r * w for u, r in zip(us, radii)], indexing="ij")
        flat = tuple(gd.reshape(-1) for gd in grids)
        if g == 0 and n == 1:
            vals = w_base(curve, z, flat[0])
        else:
            vals = eng._build_plan(g, flat)(np.full((len(flat[0]), 1), z))[:, 0]
        vals = vals.reshape((M,) * n)
        for j in range(n):
            vals = np.tensordot(vals, w.conj(), axes=([0], [0])) / M / radii[j]
        val = curve.xp(z) * vals
    if settings.lambda_normalization == "scaled_u":
        val = val * curve.lam ** (2 * g + n - 1)
    else:
        for u in us:
            val = val / curve.xp(u)
    return complex(val)
