"""High-precision reference values computed with mpmath, independent of the package.

Run as a script to print the values frozen into the test-suite.
"""

from __future__ import annotations

import mpmath as mp

mp.mp.dps = 40


def bootstrap(lam, bigN, e, r):
    """Solve ``x(eps_k) = e_k`` and ``rho_k x'(eps_k) = r_k`` by mpmath's Newton solver."""
    d, c = len(e), mp.mpf(lam) / bigN

    def equations(*v):
        eps, rho = v[:d], v[d:]
        out = []
        for k in range(d):
            out.append(eps[k] - c * sum(rho[j] / (eps[k] + eps[j]) for j in range(d)) - e[k])
        for k in range(d):
            out.append(rho[k] * (1 + c * sum(rho[j] / (eps[k] + eps[j]) ** 2 for j in range(d))) - r[k])
        return out

    sol = mp.findroot(equations, [mp.mpf(v) for v in e] + [mp.mpf(v) for v in r])
    sol = [sol[i] for i in range(2 * d)]
    return sol[:d], sol[d:], c


class MpCurve:
    def __init__(self, lam, bigN, e, r):
        self.eps, self.rho, self.c = bootstrap(lam, bigN, e, r)
        self.lam, self.r, self.d = mp.mpf(lam), [mp.mpf(v) for v in r], len(e)
        # alpha: nonzero roots of x(t) - x(-t) = 2t - c sum rho (1/(t+eps) + 1/(t-eps)) ... times t
        # x(t) - x(-t) = 2t - 2 c sum rho t / (t^2 - eps^2); divide by 2t, solve in s = t^2
        poly = [mp.mpf(1)]
        for ek in self.eps:
            poly = _polymul(poly, [-(ek**2), mp.mpf(1)])
        rhs = [mp.mpf(0)]
        for k, ek in enumerate(self.eps):
            term = [self.c * self.rho[k]]
            for j, ej in enumerate(self.eps):
                if j != k:
                    term = _polymul(term, [-(ej**2), mp.mpf(1)])
            rhs = _polyadd(rhs, term)
        coeffs = _polyadd(poly, [-v for v in rhs])
        s_roots = mp.polyroots(list(reversed(coeffs)), maxsteps=200, extraprec=200)
        self.alpha = [mp.sqrt(s) for s in s_roots]

    def x(self, z):
        return z - self.c * sum(rk / (z + ek) for rk, ek in zip(self.rho, self.eps))

    def y(self, z):
        return -self.x(-z)

    def fiber(self, z):
        """All roots of ``x(t) = x(z)``, ``z`` first."""
        X = self.x(z)
        num = [mp.mpf(1)]
        for ek in self.eps:
            num = _polymul(num, [ek, mp.mpf(1)])
        # t * prod(t+eps) - c sum rho prod_{j!=k}(t+eps_j) - X prod(t+eps)
        lhs = _polymul(num, [mp.mpf(0), mp.mpf(1)])
        for k in range(self.d):
            term = [self.c * self.rho[k]]
            for j, ej in enumerate(self.eps):
                if j != k:
                    term = _polymul(term, [ej, mp.mpf(1)])
            lhs = _polyadd(lhs, [-v for v in term])
        lhs = _polyadd(lhs, [-X * v for v in num])
        roots = mp.polyroots(list(reversed(lhs)), maxsteps=200, extraprec=200)
        roots = sorted(roots, key=lambda t: abs(t - z))
        return roots

    def ae(self, xi):
        out = mp.mpf(1)
        for a, ek in zip(self.alpha, self.eps):
            out *= (xi - self.x(a)) / (xi - self.x(ek))
        return out

    def u01(self, z, w):
        xw = self.x(w)
        prod = mp.mpf(1)
        for t in self.fiber(z)[1:]:
            prod *= xw + self.y(t)
        for ek in self.eps:
            prod /= xw - self.x(ek)
        return prod / (self.x(z) + self.y(w))

    def v01(self, z, w):
        xz, xw, x0 = self.x(z), self.x(w), self.x(mp.mpf(0))
        corr = (xw + xz - 2 * x0) * self.ae(xz) / (xz + self.y(z)) * self.ae(xw) / (xw + self.y(w))
        return self.lam / (xw - xz) ** 2 * (self.u01(z, w) - corr)


def _polymul(a, b):
    out = [mp.mpf(0)] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        for j, bj in enumerate(b):
            out[i + j] += ai * bj
    return out


def _polyadd(a, b):
    n = max(len(a), len(b))
    return [(a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0) for i in range(n)]


if __name__ == "__main__":
    for args in [(0.1, 1, [1], [1]), (0.05, 2, [1, 2], [1, 1])]:
        c = MpCurve(*args)
        print(args)
        print("  eps", [mp.nstr(v, 20) for v in c.eps])
        print("  rho", [mp.nstr(v, 20) for v in c.rho])
        print("  alpha", [mp.nstr(v, 20) for v in c.alpha])
        print("  x0", mp.nstr(c.x(mp.mpf(0)), 20))
        print("  v01(2,3)", mp.nstr(c.v01(mp.mpf(2), mp.mpf(3)), 20))
        print("  u01(2,3)", mp.nstr(c.u01(mp.mpf(2), mp.mpf(3)), 20))
