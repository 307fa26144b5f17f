"""The 1-constrained CKP hierarchy: Lax operator, generators, odd flows, checks.

The Lax operator is d + q d^-1 r + r d^-1 q.  Its odd powers generate the
flow equations q_t = B_n(q), r_t = B_n(r) with B_n the differential part of
the n-th power; even flows are frozen by the skew-adjointness constraint.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .diffring import DiffPoly, d_x, prolong_t
from .errors import DepthExhausted
from .psido import (
    PsiDO,
    adjoint,
    apply,
    commutator,
    compose,
    minus_part,
    plus_part,
    residue,
)

_Q = DiffPoly.jet("q")
_R = DiffPoly.jet("r")


@dataclass(frozen=True)
class FlowPair:
    """One time-flow of the hierarchy: the pair (q_t, r_t)."""

    m: int
    q_t: DiffPoly
    r_t: DiffPoly

    def __post_init__(self):
        if self.m <= 0 or self.m % 2 == 0:
            raise ValueError("flow index must be a positive odd integer")
        if not (self.q_t.is_local and self.r_t.is_local):
            raise ValueError("hierarchy flows must be local")


@lru_cache(maxsize=None)
def lax_operator(depth: int) -> PsiDO:
    """d + q d^-1 r + r d^-1 q, with the integral tail expanded to `depth`."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    coeffs = {1: DiffPoly.one()}
    for f, g in ((_Q, _R), (_R, _Q)):
        gk = g
        for j in range(depth):
            sign = -1 if j % 2 else 1
            order = -1 - j
            coeffs[order] = coeffs.get(order, DiffPoly.zero()) + f * gk * sign
            gk = d_x(gk)
    return PsiDO(coeffs, depth)


@lru_cache(maxsize=None)
def lax_power(n: int, depth: int | None = None) -> PsiDO:
    """L^n by iterated composition; default depth budget is n + 3."""
    if depth is None:
        depth = n + 3
    out = lax_operator(depth)
    for _ in range(n - 1):
        out = compose(lax_operator(depth), out)
    return out


def bn(n: int, depth: int | None = None) -> PsiDO:
    """The flow generator: differential part of L^n."""
    if n <= 0 or n % 2 == 0:
        raise ValueError("the hierarchy has odd flows only")
    if depth is not None and depth < n:
        raise DepthExhausted(
            f"computing the order-{n} generator needs depth >= {n}"
        )
    return plus_part(lax_power(n, depth))


@lru_cache(maxsize=None)
def flow(n: int, depth: int | None = None) -> FlowPair:
    """The t_n flow (B_n(q), B_n(r))."""
    generator = bn(n, depth)
    return FlowPair(n, apply(generator, _Q), apply(generator, _R))


def prolong_flow(p: DiffPoly, n: int, depth: int | None = None) -> DiffPoly:
    fp = flow(n, depth)
    return prolong_t(p, fp.q_t, fp.r_t)


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one verification: zero residuals mean success."""

    name: str
    passed: bool
    residuals: tuple

    def residual_lines(self):
        return [f"{label}: {poly!r}" for label, poly in self.residuals]


def check_skew(depth: int) -> CheckReport:
    """Per-order residuals of L* + L; all must vanish."""
    lax = lax_operator(depth)
    total = adjoint(lax, depth) + lax
    residuals = tuple(
        (f"order {k}", total.coeffs[k]) for k in total.orders()
    )
    return CheckReport("skew-adjointness", not residuals, residuals)


def lax_time_derivative(n: int, depth: int) -> PsiDO:
    """dL/dt_n computed coefficient-wise through the flow prolongation."""
    fp = flow(n)
    lax = lax_operator(depth)
    return PsiDO(
        {k: prolong_t(c, fp.q_t, fp.r_t) for k, c in lax.coeffs.items()},
        depth,
    )


def check_lax(n: int, depth: int) -> CheckReport:
    """Compare dL/dt_n with [B_n, L] down to order -depth."""
    lax_depth = n + depth
    lhs = lax_time_derivative(n, lax_depth)
    rhs = commutator(bn(n), lax_operator(lax_depth))
    residuals = []
    top = max(max(lhs.coeffs, default=0), max(rhs.coeffs, default=0))
    for k in range(top, -depth - 1, -1):
        diff = lhs.coeffs.get(k, DiffPoly.zero()) - rhs.coeffs.get(
            k, DiffPoly.zero()
        )
        if not diff.is_zero:
            residuals.append((f"order {k}", diff))
    return CheckReport(f"lax-equation t_{n}", not residuals, tuple(residuals))


def right_coefficients(a: PsiDO, count: int) -> list:
    """Rewrite the integral part as d^-1 a_1 + d^-2 a_2 + ... and return [a_j].

    Iteratively peels the topmost remaining negative order; each step is an
    exact Leibniz expansion of d^-j composed with the found coefficient.
    """
    if a.trunc_depth < count:
        raise DepthExhausted(
            f"need depth {count} to extract {count} right coefficients"
        )
    work = minus_part(a)
    out = []
    for j in range(1, count + 1):
        aj = work.coeffs.get(-j, DiffPoly.zero())
        out.append(aj)
        if aj.is_zero:
            continue
        expansion = compose(
            PsiDO.d(-j), PsiDO.from_poly(aj), work.trunc_depth
        )
        work = work - expansion
    return out


def check_residue_coefficients(m: int) -> CheckReport:
    """Verify d_x(a_1) = 2 (qr)_t and a_2 = (qr)_t in right-coefficient form."""
    a1, a2 = right_coefficients(lax_power(m), 2)
    qr_t = prolong_flow(_Q * _R, m)
    residuals = []
    first = d_x(a1) - 2 * qr_t
    if not first.is_zero:
        residuals.append(("d_x(a_1) - 2*(qr)_t", first))
    second = a2 - qr_t
    if not second.is_zero:
        residuals.append(("a_2 - (qr)_t", second))
    return CheckReport(
        f"residue-coefficients t_{m}", not residuals, tuple(residuals)
    )


def check_generator_adjoint(n: int) -> CheckReport:
    """B_n* = -B_n for odd n, a consequence of the skew constraint."""
    generator = bn(n)
    total = adjoint(generator) + generator
    residuals = tuple(
        (f"order {k}", total.coeffs[k]) for k in total.orders()
    )
    return CheckReport(
        f"generator-adjoint t_{n}", not residuals, tuple(residuals)
    )


def residue_identity(m: int) -> DiffPoly:
    """d_x(res L^m) - 2*(qr)_t_m; zero for every odd flow."""
    return d_x(residue(lax_power(m))) - 2 * prolong_flow(_Q * _R, m)
