"""Acceptance suite: every criterion is an exact rational-arithmetic equality.

Each test prints one PASS/FAIL line so the suite doubles as a checklist
(run with `pytest tests/test_acceptance.py -s`).
"""

import random
from fractions import Fraction

from cckp.diffring import (
    DiffPoly,
    d_x,
    integrate,
    prolong_t,
    scale_substitute,
    substitute_r_to_q,
)
from cckp.grammar import parse_poly, poly_text
from cckp.hierarchy import (
    bn,
    check_lax,
    check_residue_coefficients,
    check_skew,
    flow,
)
from cckp.nonlocal_ops import apply as nl_apply, expand_to_psido
from cckp.psido import adjoint, compose, residuals
from cckp.recursion import (
    mkdv_recursion_literal,
    reduce_matrix,
    scaled_mkdv_literal,
    scaled_mkdv_operator,
    step,
    verify_aratyn_identities,
)

from conftest import P, SEED, random_poly

Q = DiffPoly.jet("q")
R = DiffPoly.jet("r")
QX = DiffPoly.jet("q", 1)


def _verdict(number, label, ok):
    print(f"ACCEPTANCE {number:>2}: {'PASS' if ok else 'FAIL'} - {label}")
    assert ok, f"criterion {number} failed: {label}"


def test_criterion_01_third_generator():
    expected = {
        3: DiffPoly.one(),
        1: P("6*q*r"),
        0: P("3*r*q' + 3*q*r'"),
    }
    _verdict(1, "third-order generator term-for-term", bn(3).coeffs == expected)


def test_criterion_02_fifth_generator():
    expected = {
        5: DiffPoly.one(),
        3: P("10*q*r"),
        2: P("15*r*q' + 15*q*r'"),
        1: P("15*q*r'' + 15*r*q'' + 40*q^2*r^2 + 20*q'*r'"),
        0: P(
            "40*q*r^2*q' + 40*r*q^2*r' + 5*q*r[3] + 5*r*q[3]"
            " + 10*q'*r'' + 10*r'*q''"
        ),
    }
    _verdict(2, "fifth-order generator term-for-term", bn(5).coeffs == expected)


def test_criterion_03_flows():
    f3, f5 = flow(3), flow(5)
    ok = (
        f3.q_t == P("q[3] + 9*q*r*q' + 3*q^2*r'")
        and f3.r_t == P("r[3] + 9*q*r*r' + 3*r^2*q'")
        and f5.q_t
        == P(
            "q[5]+15*q*r*q[3]+30*r*q'*q''+25*q*r'*q''+25*q*q'*r''"
            "+80*q^2*r^2*q'+20*q'*r'*q'+40*r*q^3*r'+5*q^2*r[3]"
        )
        and f5.r_t
        == P(
            "r[5]+15*q*r*r[3]+30*q*r'*r''+25*r*q'*r''+25*r*r'*q''"
            "+80*q^2*r^2*r'+20*q'*r'*r'+40*q*r^3*q'+5*r^2*q[3]"
        )
    )
    _verdict(3, "third and fifth flows term-for-term", ok)


def test_criterion_04_skew_adjointness():
    report = check_skew(8)
    _verdict(4, "Lax operator skew-adjoint to depth 8", report.passed)


def test_criterion_05_lax_equation():
    ok = check_lax(3, 2).passed and check_lax(5, 2).passed
    _verdict(5, "Lax equation for t_3 and t_5 at depth 2", ok)


def test_criterion_06_recursion_steps():
    s3 = step(flow(1))
    s5 = step(flow(3))
    f3, f5 = flow(3), flow(5)
    ok = (
        s3.q_t == f3.q_t
        and s3.r_t == f3.r_t
        and s5.q_t == f5.q_t
        and s5.r_t == f5.r_t
    )
    _verdict(6, "recursion step t_1->t_3 and t_3->t_5 with atoms cancelling", ok)


def test_criterion_07_two_step_and_seventh_flow():
    two = step(step(flow(1)))
    f5 = flow(5)
    s7 = step(f5)
    f7 = flow(7)
    ok = (
        two.q_t == f5.q_t
        and two.r_t == f5.r_t
        and s7.q_t == f7.q_t
        and s7.r_t == f7.r_t
    )
    _verdict(7, "two-step consistency and t_7 against the generator route", ok)


def test_criterion_08_operator_identities():
    probes = (Q, R, Q * R, QX)
    ok = True
    for n in (1, 3, 5):
        for f in probes:
            for g in probes:
                if not verify_aratyn_identities(n, f, g, depth=4).passed:
                    ok = False
    _verdict(8, "operator identities at depth 4 over the probe grid", ok)


def test_criterion_09_residue_coefficients():
    ok = all(check_residue_coefficients(m).passed for m in (1, 3, 5))
    _verdict(9, "right-form residue coefficients for t_1, t_3, t_5", ok)


def test_criterion_10_reduction():
    reduced = reduce_matrix()
    third = nl_apply(reduced, QX)
    fifth = nl_apply(reduced, third)
    series_ok = not residuals(
        expand_to_psido(reduced, 6),
        expand_to_psido(mkdv_recursion_literal(), 6),
        6,
    )
    ok = (
        third == P("q[3] + 12*q^2*q'")
        and fifth == P("q[5]+20*q^2*q[3]+80*q*q'*q''+120*q^4*q'+20*q'^3")
        and series_ok
    )
    _verdict(10, "reduced operator: both flows and depth-6 series", ok)


def test_criterion_11_scaling():
    lam_sq = Fraction(1, 12)
    third = scale_substitute(substitute_r_to_q(flow(3).q_t), lam_sq)
    fifth = scale_substitute(substitute_r_to_q(flow(5).q_t), lam_sq)
    ok = (
        third == P("u[3] + u^2*u'")
        and fifth
        == P("u[5] + 5/3*u^2*u[3] + 20/3*u*u'*u'' + 5/6*u^4*u' + 5/3*u'^3")
        and scaled_mkdv_operator() == scaled_mkdv_literal()
    )
    _verdict(11, "scaling with lam^2 = 1/12 reproduces the rescaled forms", ok)


def test_criterion_12_property_suites():
    rng = random.Random(SEED)
    ok = True
    for _ in range(200):
        a = random_poly(rng, allow_atoms=True, allow_scale=True)
        b = random_poly(rng, allow_atoms=True, allow_scale=True)
        c = random_poly(rng, allow_atoms=True, allow_scale=True)
        if (a + b) + c != a + (b + c) or a * (b + c) != a * b + a * c:
            ok = False
        if (a * b) * c != a * (b * c) or a * b != b * a:
            ok = False
        if d_x(a * b) != d_x(a) * b + a * d_x(b):
            ok = False
        local, rho = integrate(a)
        if d_x(local) + rho != a or integrate(rho) != (DiffPoly.zero(), rho):
            ok = False
        if parse_poly(poly_text(a)) != a:
            ok = False

    from test_psido import random_psido

    for _ in range(200):
        x = random_psido(rng, depth=8)
        y = random_psido(rng, depth=8)
        z = random_psido(rng, depth=8)
        left = compose(compose(x, y), z)
        right = compose(x, compose(y, z))
        depth = min(left.trunc_depth, right.trunc_depth)
        if depth >= 0 and residuals(left, right, depth):
            ok = False
        lhs = adjoint(compose(x, y))
        rhs = compose(adjoint(y), adjoint(x))
        depth = min(lhs.trunc_depth, rhs.trunc_depth)
        if depth >= 0 and residuals(lhs, rhs, depth):
            ok = False
        double = adjoint(adjoint(x))
        if residuals(double, x, double.trunc_depth):
            ok = False
    _verdict(12, "randomized property suites (200 instances each)", ok)
