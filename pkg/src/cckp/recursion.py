"""The recursion matrix mapping the t_m flow to the t_(m+2) flow, and its
reduction to the mKdV recursion operator under q = r."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .diffring import (
    DEFAULT_NESTING_LIMIT,
    DiffPoly,
    antiderivative,
    scale_q_to_u,
    shift_lambda,
)
from .errors import OddScaleResidue, ResidualNonlocal
from .hierarchy import CheckReport, FlowPair, bn
from .nonlocal_ops import (
    DX,
    DXINV,
    IntDiffOperator,
    IntDiffTerm,
    apply,
    collapse_exact_pairs,
    distribute,
    eliminate_trailing_dx,
    expand_to_psido,
    substitute_r_to_q,
    swap_q_r,
    term,
)
from .psido import adjoint, apply as psido_apply, compose, minus_part, residuals

_Q = DiffPoly.jet("q")
_R = DiffPoly.jet("r")
_QX = DiffPoly.jet("q", 1)
_RX = DiffPoly.jet("r", 1)


def _atom(p: DiffPoly) -> DiffPoly:
    return antiderivative(p)


def eigen_image_q() -> DiffPoly:
    """The Lax operator applied to q: q_x + q*I(qr) + r*I(q^2)."""
    return _QX + _Q * _atom(_R * _Q) + _R * _atom(_Q * _Q)


def eigen_image_r() -> DiffPoly:
    """The Lax operator applied to r: r_x + q*I(r^2) + r*I(qr)."""
    return _RX + _Q * _atom(_R * _R) + _R * _atom(_Q * _R)


@dataclass(frozen=True)
class RecursionMatrix:
    r11: IntDiffOperator
    r12: IntDiffOperator
    r21: IntDiffOperator
    r22: IntDiffOperator


@lru_cache(maxsize=None)
def build_matrix() -> RecursionMatrix:
    """The four entries, with the squared-Lax block expanded to chains.

    The square of the Lax operator contributes d^2 + 4qr plus four nonlocal
    chains built from its action on the eigenfunctions; the remaining terms
    are carried verbatim.
    """
    lam_q = eigen_image_q()
    lam_r = eigen_image_r()
    lam_star_q = -lam_q
    lam_star_r = -lam_r
    i_qr = _atom(_Q * _R)
    i_qq = _atom(_Q * _Q)
    i_rr = _atom(_R * _R)

    r11 = IntDiffOperator(
        (
            (1, term(DX, DX)),
            (4, term(_Q * _R)),
            (1, term(_Q, DXINV, lam_star_r)),
            (1, term(_R, DXINV, lam_star_q)),
            (1, term(lam_q, DXINV, _R)),
            (1, term(lam_r, DXINV, _Q)),
            (3, term(_Q * _R)),
            (1, term(lam_r, DXINV, _Q)),
            (2, term(_QX, DXINV, _R)),
            (-1, term(_Q, DXINV, _Q * _R, DXINV, _R)),
            (-1, term(_R, DXINV, _Q, DX)),
            (-1, term(_R, DXINV, _Q * _Q, DXINV, _R)),
            (-2, term(_R, DXINV, _R * _Q, DXINV, _Q)),
            (-1, term(_R, DXINV, _Q * i_qr)),
            (-1, term(_Q, DXINV, _Q * i_rr)),
        )
    )
    r12 = IntDiffOperator(
        (
            (2, term(_QX, DXINV, _Q)),
            (3, term(_Q * _Q)),
            (-2, term(_Q, DXINV, _Q * _Q, DXINV, _R)),
            (-1, term(_Q, DXINV, _Q, DX)),
            (-1, term(_Q, DXINV, _Q * _R, DXINV, _Q)),
            (-1, term(_R, DXINV, _Q * _Q, DXINV, _Q)),
            (-1, term(_Q, DXINV, _Q * i_qr)),
            (-1, term(_R, DXINV, _Q * i_qq)),
            (1, term(lam_q, DXINV, _Q)),
        )
    )
    return RecursionMatrix(
        r11=r11, r12=r12, r21=swap_q_r(r12), r22=swap_q_r(r11)
    )


def step(
    flow_pair: FlowPair,
    matrix: RecursionMatrix | None = None,
    nesting_limit: int = DEFAULT_NESTING_LIMIT,
) -> FlowPair:
    """Map the t_m flow to the t_(m+2) flow through the recursion matrix.

    Every antiderivative atom produced along the way must cancel in the
    summed result; a surviving atom signals an encoding or integration
    defect and raises `ResidualNonlocal`.
    """
    mat = matrix if matrix is not None else build_matrix()
    q_next = apply(mat.r11, flow_pair.q_t, nesting_limit) + apply(
        mat.r12, flow_pair.r_t, nesting_limit
    )
    r_next = apply(mat.r21, flow_pair.q_t, nesting_limit) + apply(
        mat.r22, flow_pair.r_t, nesting_limit
    )
    for label, value in (("q", q_next), ("r", r_next)):
        if not value.is_local:
            raise ResidualNonlocal(
                f"atoms failed to cancel in the {label} component: "
                f"{value.atom_part()!r}"
            )
    return FlowPair(flow_pair.m + 2, q_next, r_next)


@lru_cache(maxsize=None)
def reduce_matrix() -> IntDiffOperator:
    """The operator governing q_t under q = r: substitute, sum, simplify.

    The row sum r11 + r12 after the substitution is simplified by
    distributing payloads, eliminating d^-1 f d patterns, and collapsing
    exact antiderivative pairs; the result is the three-term mKdV recursion
    operator.
    """
    mat = build_matrix()
    total = substitute_r_to_q(mat.r11) + substitute_r_to_q(mat.r12)
    total = distribute(total)
    total = eliminate_trailing_dx(total)
    total = distribute(total)
    total = collapse_exact_pairs(total)
    return total


def mkdv_recursion_literal() -> IntDiffOperator:
    """d^2 + 8 q^2 + 8 q_x d^-1 q."""
    return IntDiffOperator(
        (
            (1, term(DX, DX)),
            (8, term(_Q * _Q)),
            (8, term(_QX, DXINV, _Q)),
        )
    )


def scaled_mkdv_literal() -> IntDiffOperator:
    """d^2 + (2/3) u^2 + (2/3) u_x d^-1 u."""
    u = DiffPoly.jet("u")
    ux = DiffPoly.jet("u", 1)
    return IntDiffOperator(
        (
            (1, term(DX, DX)),
            (Fraction(2, 3), term(u * u)),
            (Fraction(2, 3), term(ux, DXINV, u)),
        )
    )


def scale_operator(
    operator: IntDiffOperator, lambda_sq
) -> IntDiffOperator:
    """Substitute q = lam*u in every payload and resolve lam^2 per chain.

    Each payload must be homogeneous in the scale constant; the exponents
    collected along a chain must sum to an even number, which holds exactly
    when every term of the operator has even total degree in q.
    """
    lambda_sq = Fraction(lambda_sq)
    out = []
    for weight, t in operator.terms:
        new_chain = []
        exponent = 0
        for factor in t.chain:
            if factor in (DX, DXINV):
                new_chain.append(factor)
                continue
            scaled = scale_q_to_u(factor)
            exps = {key[2] for key, _ in scaled.terms}
            if len(exps) > 1:
                raise OddScaleResidue(
                    "payload is not homogeneous under the scaling "
                    f"substitution: {factor!r}"
                )
            e = exps.pop() if exps else 0
            exponent += e
            new_chain.append(shift_lambda(scaled, -e))
        if exponent % 2:
            raise OddScaleResidue(
                f"chain carries an odd scale exponent {exponent}: {t!r}"
            )
        out.append(
            (weight * lambda_sq ** (exponent // 2), IntDiffTerm(new_chain))
        )
    return IntDiffOperator(out)


def scaled_mkdv_operator(lambda_sq=Fraction(1, 12)) -> IntDiffOperator:
    """The reduced operator rescaled by q = lam*u with lam^2 = 1/12."""
    return scale_operator(reduce_matrix(), lambda_sq)


def verify_aratyn_identities(
    n: int, f: DiffPoly, g: DiffPoly, depth: int = 4
) -> CheckReport:
    """The three operator identities behind the recursion construction.

    For the generator B of the t_n flow, checks to the given depth that
      (B f d^-1 g)_-  =  B(f) d^-1 g,
      (f d^-1 g B)_-  =  f d^-1 B*(g),
      f1 d^-1 g1 f2 d^-1 g2 = f1 (int g1 f2) d^-1 g2 - f1 d^-1 g2 (int f2 g1)
    with (f1, g1, f2, g2) = (f, g, g, f) in the third.
    """
    generator = bn(n)
    fg = expand_to_psido(
        IntDiffOperator(((1, term(f, DXINV, g)),)), depth + n
    )

    lhs1 = minus_part(compose(generator, fg))
    rhs1 = expand_to_psido(
        IntDiffOperator(((1, term(psido_apply(generator, f), DXINV, g)),)),
        depth,
    )
    res1 = residuals(lhs1, minus_part(rhs1), depth)

    lhs2 = minus_part(compose(fg, generator))
    adj_g = psido_apply(adjoint(generator), g)
    rhs2 = expand_to_psido(
        IntDiffOperator(((1, term(f, DXINV, adj_g)),)), depth
    )
    res2 = residuals(lhs2, minus_part(rhs2), depth)

    f1, g1, f2, g2 = f, g, g, f
    e1 = expand_to_psido(
        IntDiffOperator(((1, term(f1, DXINV, g1)),)), depth + 1
    )
    e2 = expand_to_psido(
        IntDiffOperator(((1, term(f2, DXINV, g2)),)), depth + 1
    )
    lhs3 = compose(e1, e2)
    inner = antiderivative(g1 * f2)
    rhs3 = expand_to_psido(
        IntDiffOperator(
            (
                (1, term(f1 * inner, DXINV, g2)),
                (-1, term(f1, DXINV, g2 * inner)),
            )
        ),
        depth,
    )
    res3 = residuals(lhs3, rhs3, depth)

    collected = []
    for label, res in (
        ("differential-part identity", res1),
        ("adjoint identity", res2),
        ("antiderivative product identity", res3),
    ):
        for order, diff in sorted(res.items(), reverse=True):
            collected.append((f"{label}, order {order}", diff))
    return CheckReport(
        f"recursion-identities t_{n}", not collected, tuple(collected)
    )
