import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quarticbtr import loopeq
from quarticbtr.errors import StabilityViolation
from quarticbtr.recursion import w_base

Z, U1, U2, U3 = 1.7 + 0.3j, 0.6 - 0.2j, 0.5 + 0.9j, -0.4 + 0.7j
BELL = [1, 1, 2, 5, 15, 52]


@pytest.mark.parametrize("n", range(6))
def test_set_partition_counts(n):
    parts = list(loopeq.set_partitions(range(n)))
    assert len(parts) == BELL[n]
    for p in parts:
        assert sorted(x for block in p for x in block) == list(range(n))


def test_relative_residual_formula():
    assert loopeq.relative_residual(1 + 1j, 1 + 1j) == 0
    assert loopeq.relative_residual(3.0, 1.0) == pytest.approx(2 / 4)


def test_report_rejects_unknown_identity():
    with pytest.raises(ValueError):
        loopeq.LoopEqReport("nope", (1.0,), 0, 0)


def test_insertion_examples(d1_engine):
    c, eng = d1_engine.curve, d1_engine
    ev = lambda g, z, us: complex(eng.w(g, z, us))
    X, u, v, w = 2.3 + 0.1j, 0.8 - 0.3j, U1, U2
    b = X + c.y(u)
    assert loopeq.loop_insert_power(c, u, 1, X, (), evaluator=ev) == pytest.approx(1 / b)
    one = loopeq.loop_insert_power(c, u, 1, X, (v,), evaluator=ev)
    assert one == pytest.approx(-c.lam * w_base(c, u, v) / b**2, rel=1e-14)
    two = loopeq.loop_insert_power(c, u, 1, X, (v, w), evaluator=ev)
    expected = (-c.lam * ev(0, u, (v, w)) / b**2
                + 2 * c.lam**2 * w_base(c, u, v) * w_base(c, u, w) / b**3)
    assert two == pytest.approx(expected, rel=1e-13)


def test_insertion_power_two_against_derivative_of_power_one(d1_curve):
    # D_v b^-2 = -2 b^-3 D_v b ; compare the p=2 expansion with p=1 scaled
    c, X, u, v = d1_curve, 2.3 + 0.1j, 0.8 - 0.3j, U1
    b = X + c.y(u)
    two = loopeq.loop_insert_power(c, u, 2, X, (v,))
    assert two == pytest.approx(-2 * c.lam * w_base(c, u, v) / b**3, rel=1e-14)


def test_insertion_rejects_bad_power(d1_curve):
    with pytest.raises(ValueError):
        loopeq.loop_insert_power(d1_curve, U1, 0, 1.0)


@settings(max_examples=10, deadline=None)
@given(st.permutations([U1, U2, U3]))
def test_insertions_commute(order):
    from conftest import D1
    from quarticbtr.curve import bootstrap
    c = bootstrap(D1)
    ref = loopeq.loop_insert_power(c, 0.8 - 0.3j, 1, 2.3 + 0.1j, (U1, U2, U3))
    val = loopeq.loop_insert_power(c, 0.8 - 0.3j, 1, 2.3 + 0.1j, tuple(order))
    assert abs(val - ref) < 1e-10 * abs(ref)


@pytest.mark.parametrize("name", ["d1_curve", "d2_curve", "r2_curve"])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_planar_loop_equations(name, k, request):
    c = request.getfixturevalue(name)
    us = (U1, U2, U3)[:k]
    assert loopeq.check_linear_g0(c, Z, us).residual < 1e-10
    assert loopeq.check_quadratic_g0(c, Z, us).residual < 1e-10


def test_planar_equations_need_an_insertion(d1_curve):
    with pytest.raises(StabilityViolation):
        loopeq.check_linear_g0(d1_curve, Z, ())
    with pytest.raises(StabilityViolation):
        loopeq.check_linear_g1(d1_curve, Z, (U1, U2))


def test_linear_fiber_sum_is_fiber_invariant(d2_curve):
    fb = d2_curve.fiber(np.asarray(Z))
    ref = loopeq.check_linear_g1(d2_curve, Z, ())
    for t in fb[1:]:
        other = loopeq.check_linear_g1(d2_curve, complex(t), ())
        assert abs(other.lhs - ref.lhs) < 1e-9 * abs(ref.lhs)


def _perturbed(engine, g0, n0, factor=1.01):
    def ev(g, z, us):
        v = complex(engine.w(g, z, tuple(us)))
        return factor * v if (g, len(us)) == (g0, n0) else v
    return ev


def test_planar_checks_detect_perturbation(d1_engine):
    c = d1_engine.curve
    ev = _perturbed(d1_engine, 0, 2)
    assert loopeq.check_linear_g0(c, Z, (U1, U2), evaluator=ev).residual > 1e-4
    assert loopeq.check_quadratic_g0(c, Z, (U1, U2), evaluator=ev).residual > 1e-4


def test_genus_one_checks_detect_perturbation(d1_engine):
    c = d1_engine.curve
    # relative residuals are O(|W|), so compare against the unperturbed floor
    for n in (0, 1):
        us = (U1,)[:n]
        ok = loopeq.check_linear_g1(c, Z, us, d1_engine.cache).residual
        bad = loopeq.check_linear_g1(c, Z, us, evaluator=_perturbed(d1_engine, 1, n)).residual
        assert bad > 1e3 * max(ok, 1e-16)


@pytest.mark.parametrize("name", ["d1_curve", "d2_curve", "r2_curve"])
def test_genus_one_loop_equations(name, request):
    c = request.getfixturevalue(name)
    for us in ((), (U1,)):
        assert loopeq.check_linear_g1(c, Z, us).residual < 1e-10
        assert loopeq.check_quadratic_g1(c, Z, us).residual < 1e-10


def test_genus_one_terms_have_teeth(d1_curve):
    rep = loopeq.check_quadratic_g1(d1_curve, Z, (U1,))
    floor = max(rep.residual, 1e-16)
    for name in ("dagger", "brace", "x0", "diag", "pairs", "fixed_points", "diagonal"):
        assert rep.without(name) > 1e3 * floor, name


def test_fixed_point_weights_matter_when_multiplicity_differs(r2_curve):
    rep = loopeq.check_quadratic_g1(r2_curve, Z, ())
    unweighted = rep.rhs - rep.terms["fixed_points"] / 2  # r = 2
    assert rep.residual < 1e-12
    assert loopeq.relative_residual(rep.lhs, unweighted) > 1e-4


@pytest.mark.parametrize("g, us, center", [
    (0, (U1, U2), -U1), (0, (U1, U2, U3), -U3), (1, (U1,), -U1), (1, (), 0.0), (1, (U1,), 0.0)])
def test_residues_vanish(d1_curve, g, us, center):
    rep = loopeq.check_residue_vanishing(d1_curve, g, us, center)
    assert abs(rep.lhs) < 1e-9


def test_residue_control_at_the_diagonal(d1_curve):
    rep = loopeq.check_residue_vanishing(d1_curve, 0, (U1,), U1, expected=1.0)
    assert rep.residual < 1e-12


def test_closedform_reports(d2_curve):
    reps = loopeq.check_closedforms(d2_curve, 1.3 + 0.7j, -0.8 + 1.1j)
    assert {r.identity for r in reps} == {"dse_u0", "sym_u01", "diag_u01", "dse_v0",
                                          "sym_p01", "qhat_identity"}
    assert max(r.residual for r in reps) < 1e-10
    for r in reps:
        d = r.to_dict()
        assert d["residual"] == r.residual and len(d["lhs"]) == 2
