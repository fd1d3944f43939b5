import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quarticbtr.curve import (CurveConfig, bootstrap, galois_conjugate, preimages, x_eval,
                              xp_eval, y_eval)
from quarticbtr.errors import BadConfig, PoleHit

# 40-digit mpmath solutions (tests/mp_reference.py), rounded to 17 digits
D1_EPS, D1_RHO = [1.0467251416997126621], [0.97816761133141773035]
D1_ALPHA, D1_X0 = [1.0924515016234932751], -0.093450283399425324293
D2_EPS = [1.0203489890961835669, 2.0143467472946915222]
D2_RHO = [0.99141937665947194141, 0.99579260465893672769]
D2_ALPHA, D2_X0 = [1.0323240829762264661, 2.0205672879482536235], -0.036649936991381707395


@pytest.mark.parametrize("cfg, eps, rho, alpha, x0", [
    (CurveConfig(0.1, 1, (1.0,), (1,)), D1_EPS, D1_RHO, D1_ALPHA, D1_X0),
    (CurveConfig(0.05, 2, (1.0, 2.0), (1, 1)), D2_EPS, D2_RHO, D2_ALPHA, D2_X0),
])
def test_bootstrap_matches_high_precision_solution(cfg, eps, rho, alpha, x0):
    c = bootstrap(cfg)
    assert np.allclose(c.eps, eps, rtol=0, atol=1e-14)
    assert np.allclose(c.rho, rho, rtol=0, atol=1e-14)
    assert np.allclose(c.alpha, alpha, rtol=0, atol=1e-13)
    assert abs(c.x0 - x0) < 1e-14


def test_d1_ramification_points_closed_form(d1_curve):
    c = d1_curve
    expected = -c.eps[0] + np.array([-1j, 1j]) * np.sqrt(c.lam * c.rho[0] / c.config.bigN)
    assert np.allclose(np.sort_complex(c.beta), np.sort_complex(expected), atol=1e-13)


def test_ramification_points_are_zeros_of_x_prime(d2_curve):
    assert len(d2_curve.beta) == 2 * d2_curve.d
    assert np.all(np.abs(d2_curve.xp(d2_curve.beta)) < 1e-12)


def test_alpha_solves_x_symmetric(d2_curve):
    a = d2_curve.alpha
    assert np.all(np.abs(d2_curve.x(a) - d2_curve.x(-a)) < 1e-12)
    assert np.all(np.abs(a) > 1e-3)


def test_degenerate_curve_is_identity():
    c = bootstrap(CurveConfig(0.0, 1, (1.0, 3.0), (2, 1)))
    assert c.degenerate and len(c.beta) == 0 and len(c.alpha) == 0
    assert np.allclose(c.eps, [1, 3]) and np.allclose(c.rho, [2, 1])
    assert c.x(0.3 + 0.2j) == pytest.approx(0.3 + 0.2j)


@pytest.mark.parametrize("kwargs", [
    dict(lam=0.1, bigN=1, e=(), r=()),
    dict(lam=0.1, bigN=1, e=(2.0, 1.0), r=(1, 1)),
    dict(lam=0.1, bigN=1, e=(1.0,), r=(0,)),
    dict(lam=0.1, bigN=0, e=(1.0,), r=(1,)),
    dict(lam=float("nan"), bigN=1, e=(1.0,), r=(1,)),
])
def test_bad_configs_rejected(kwargs):
    with pytest.raises(BadConfig):
        CurveConfig(**kwargs)


def test_bootstrap_is_fast():
    t = time.perf_counter()
    bootstrap(CurveConfig(0.05, 2, (1.0, 2.0), (1, 1)))
    assert time.perf_counter() - t < 1.0


def test_checked_evaluators_raise_on_poles(d1_curve):
    with pytest.raises(PoleHit):
        x_eval(d1_curve, -d1_curve.eps[0])
    with pytest.raises(PoleHit):
        y_eval(d1_curve, d1_curve.eps[0])
    with pytest.raises(PoleHit):
        xp_eval(d1_curve, -d1_curve.eps[0])


def test_y_derivatives(d2_curve):
    z, h = 0.9 + 0.4j, 1e-5
    fd = (d2_curve.y(z + h) - d2_curve.y(z - h)) / (2 * h)
    assert abs(d2_curve.y_deriv(z, 1) - fd) < 1e-8


points = st.complex_numbers(min_magnitude=0.2, max_magnitude=3.0, allow_nan=False,
                            allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(points)
def test_fiber_closure(z):
    from conftest import D2
    c = _cached(D2)
    fb = preimages(c, z)
    assert len(fb) == c.d + 1 and fb[0] == z
    assert np.all(np.abs(c.x(fb) - c.x(z)) < 1e-9 * (1 + abs(c.x(z))))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 0.6), st.floats(0, 2 * np.pi))
def test_galois_involution_near_each_ramification_point(frac, angle):
    from conftest import D2
    c = _cached(D2)
    for i, b in enumerate(c.beta):
        q = b + frac * c.sigma_radius(i) * np.exp(1j * angle)
        s = complex(c.sigma(i, q))
        assert abs(c.x(s) - c.x(q)) < 1e-10 * (1 + abs(c.x(q)))
        assert abs(complex(c.sigma(i, s)) - q) < 1e-9
        assert abs(galois_conjugate(c, i, q) - s) < 1e-9


def test_sigma_power_matrix_first_rows(d1_curve):
    m = d1_curve.sigma_power_matrix(0, 6)
    assert m[0, 0] == 1 and np.all(m[0, 1:] == 0)
    assert m[1, 1] == pytest.approx(-1, abs=1e-10)  # sigma reverses direction at beta


def test_summary_is_plain_data(d2_curve):
    import json
    s = d2_curve.summary()
    json.dumps(s)
    assert s["residual_x"] < 1e-12 and s["residual_rho"] < 1e-12


_curves = {}


def _cached(cfg):
    if cfg not in _curves:
        _curves[cfg] = bootstrap(cfg)
    return _curves[cfg]
