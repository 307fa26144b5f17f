"""Differential polynomial ring over Q in jet variables, with antiderivative atoms.

Values are immutable and every operation returns a new canonical ``DiffPoly``.
The ring knows three dependent symbols (``q``, ``r`` and the rescaled ``u``),
a formal scale constant ``lam``, and formal antiderivatives ``I(...)`` of
expressions that are not total x-derivatives.

``integrate`` is the exact integration-by-parts engine: it splits any
polynomial ``p`` as ``d_x(F) + rho`` where the remainder ``rho`` is canonical
and admits no further reduction.  The split is computed as a normal form of
``p`` against the span of ``d_x`` images of a finite candidate set, so equal
inputs (and inputs that differ by exact terms) always produce identical
remainders.  That determinism is what lets antiderivative atoms created in
independent computations cancel exactly.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Iterator, NamedTuple

from .errors import EngineError, NestingTooDeep, OddScaleResidue

SYMBOLS = ("q", "r", "u")

DEFAULT_NESTING_LIMIT = 2

# A monomial key is (jets, atoms, scale):
#   jets:  tuple of ((symbol, order), power), sorted
#   atoms: tuple of (atom_key, power), sorted; atom_key is the integrand's
#          terms tuple, so atoms are equal exactly when their integrands are
#   scale: integer exponent of the formal constant lam

_EMPTY_KEY = ((), (), 0)


def _fr(c) -> Fraction:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, int):
        return Fraction(c)
    raise TypeError(f"expected a rational coefficient, got {type(c).__name__}")


def _merge_factors(a, b):
    """Multiply two sorted factor tuples (powers add)."""
    if not a:
        return b
    if not b:
        return a
    d = dict(a)
    for k, p in b:
        d[k] = d.get(k, 0) + p
    return tuple(sorted((k, p) for k, p in d.items() if p))


def _key_mul(k1, k2):
    return (
        _merge_factors(k1[0], k2[0]),
        _merge_factors(k1[1], k2[1]),
        k1[2] + k2[2],
    )


def _jet_weight(jets) -> int:
    return sum(order * p for (_, order), p in jets)


def _jet_degree(jets) -> int:
    return sum(p for _, p in jets)


def _jet_symdeg(jets):
    d = {}
    for (sym, _), p in jets:
        d[sym] = d.get(sym, 0) + p
    return tuple(sorted(d.items()))


@lru_cache(maxsize=None)
def _atom_depth(atom_key) -> int:
    inner = 0
    for (_, atoms, _), _ in atom_key:
        for akey, _ in atoms:
            inner = max(inner, _atom_depth(akey))
    return 1 + inner


def _key_atom_depths(key):
    jets, atoms, scale = key
    depths = []
    for akey, p in atoms:
        depths.extend([_atom_depth(akey)] * p)
    return tuple(sorted(depths, reverse=True))


def _mon_priority(key):
    """Total order on monomial keys; larger keys are reduced first."""
    jets, atoms, scale = key
    return (
        _key_atom_depths(key),
        atoms,
        _jet_degree(jets),
        _jet_weight(jets),
        jets,
        scale,
    )


def _display_key(item):
    key, _ = item
    jets, atoms, scale = key
    max_order = max((order for (_, order), _ in jets), default=0)
    return (
        -max_order,
        -_jet_weight(jets),
        _jet_degree(jets),
        jets,
        atoms,
        scale,
    )


class JetVar(NamedTuple):
    """A dependent symbol together with its number of x-derivatives."""

    symbol: str
    order: int


class DiffPoly:
    """Exact-rational polynomial in jet variables and antiderivative atoms."""

    __slots__ = ("terms",)

    def __init__(self, terms=()):
        self.terms = tuple(terms)

    @classmethod
    def _from_dict(cls, d) -> "DiffPoly":
        return cls(tuple(sorted((k, c) for k, c in d.items() if c)))

    @classmethod
    def zero(cls) -> "DiffPoly":
        return _ZERO_POLY

    @classmethod
    def one(cls) -> "DiffPoly":
        return _ONE_POLY

    @classmethod
    def const(cls, c) -> "DiffPoly":
        c = _fr(c)
        return cls(((_EMPTY_KEY, c),)) if c else _ZERO_POLY

    @classmethod
    def jet(cls, symbol: str, order: int = 0) -> "DiffPoly":
        if symbol not in SYMBOLS:
            raise ValueError(f"unknown symbol {symbol!r}")
        if order < 0:
            raise ValueError("derivative order must be >= 0")
        key = ((((symbol, order), 1),), (), 0)
        return cls(((key, Fraction(1)),))

    @classmethod
    def lam(cls, exponent: int = 1) -> "DiffPoly":
        return cls(((((), (), exponent), Fraction(1)),))

    # -- ring structure -----------------------------------------------------

    def __bool__(self) -> bool:
        return bool(self.terms)

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, other) -> bool:
        if isinstance(other, DiffPoly):
            return self.terms == other.terms
        if isinstance(other, (int, Fraction)):
            return self == DiffPoly.const(other)
        return NotImplemented

    def __hash__(self):
        return hash(self.terms)

    def __add__(self, other) -> "DiffPoly":
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        d = dict(self.terms)
        for k, c in other.terms:
            nc = d.get(k, 0) + c
            if nc:
                d[k] = nc
            elif k in d:
                del d[k]
        return DiffPoly._from_dict(d)

    __radd__ = __add__

    def __neg__(self) -> "DiffPoly":
        return DiffPoly(tuple((k, -c) for k, c in self.terms))

    def __sub__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other) -> "DiffPoly":
        if isinstance(other, (int, Fraction)):
            c = _fr(other)
            if not c:
                return _ZERO_POLY
            return DiffPoly(tuple((k, c * v) for k, v in self.terms))
        if not isinstance(other, DiffPoly):
            return NotImplemented
        d = {}
        for k1, c1 in self.terms:
            for k2, c2 in other.terms:
                k = _key_mul(k1, k2)
                nc = d.get(k, 0) + c1 * c2
                if nc:
                    d[k] = nc
                elif k in d:
                    del d[k]
        return DiffPoly._from_dict(d)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "DiffPoly":
        if n < 0:
            raise ValueError("negative powers are not defined in the ring")
        out = _ONE_POLY
        for _ in range(n):
            out = out * self
        return out

    def __repr__(self) -> str:
        from .grammar import poly_text

        return poly_text(self)

    # -- structure inspection ------------------------------------------------

    def monomials(self) -> Iterator[tuple]:
        """Yield (coefficient, jet factors, atom factors, scale exponent)."""
        for (jets, atoms, scale), c in self.terms:
            jet_view = tuple((JetVar(*jv), p) for jv, p in jets)
            atom_view = tuple((NonlocalAtom(DiffPoly(a)), p) for a, p in atoms)
            yield c, jet_view, atom_view, scale

    @property
    def is_local(self) -> bool:
        return all(not k[1] for k, _ in self.terms)

    def atom_part(self) -> "DiffPoly":
        return DiffPoly(tuple((k, c) for k, c in self.terms if k[1]))

    def local_part(self) -> "DiffPoly":
        return DiffPoly(tuple((k, c) for k, c in self.terms if not k[1]))

    def constant_term(self) -> Fraction:
        for k, c in self.terms:
            if k == _EMPTY_KEY:
                return c
        return Fraction(0)

    def constant_part(self) -> "DiffPoly":
        """Terms in the kernel of d_x: no jets, no atoms, any scale power."""
        return DiffPoly(
            tuple((k, c) for k, c in self.terms if not k[0] and not k[1])
        )

    def symbols(self) -> set:
        out = set()
        for (jets, atoms, _), _ in self.terms:
            for (sym, _), _p in jets:
                out.add(sym)
            for akey, _p in atoms:
                out |= DiffPoly(akey).symbols()
        return out

    def max_atom_depth(self) -> int:
        depth = 0
        for (_, atoms, _), _ in self.terms:
            for akey, _p in atoms:
                depth = max(depth, _atom_depth(akey))
        return depth

    def display_terms(self):
        return sorted(self.terms, key=_display_key)


_ZERO_POLY = DiffPoly()
_ONE_POLY = DiffPoly(((_EMPTY_KEY, Fraction(1)),))


def _coerce(x):
    if isinstance(x, DiffPoly):
        return x
    if isinstance(x, (int, Fraction)):
        return DiffPoly.const(x)
    return NotImplemented


class NonlocalAtom:
    """Formal antiderivative of an expression that is not a total derivative.

    The integrand must be in reduced form (integrating it again yields no
    local part); two atoms are equal exactly when their integrands are.
    """

    __slots__ = ("key",)

    def __init__(self, integrand: DiffPoly):
        if integrand.is_zero:
            raise ValueError("atom integrand must be nonzero")
        local, _rho = integrate(integrand)
        if not local.is_zero:
            raise ValueError(
                "atom integrand is not reduced; build antiderivatives "
                "through antiderivative() instead"
            )
        self.key = integrand.terms

    @property
    def integrand(self) -> DiffPoly:
        return DiffPoly(self.key)

    @property
    def depth(self) -> int:
        return _atom_depth(self.key)

    def as_poly(self) -> DiffPoly:
        return DiffPoly(((((), ((self.key, 1),), 0), Fraction(1)),))

    def __eq__(self, other):
        return isinstance(other, NonlocalAtom) and self.key == other.key

    def __hash__(self):
        return hash(("atom", self.key))

    def __repr__(self):
        from .grammar import poly_text

        return f"I({poly_text(self.integrand)})"


# -- differentiation ---------------------------------------------------------


def _dx_key(key) -> dict:
    """Total x-derivative of a single monic monomial, as a key -> coeff dict."""
    jets, atoms, scale = key
    out = {}
    for i, ((sym, order), power) in enumerate(jets):
        rest = list(jets)
        if power == 1:
            del rest[i]
        else:
            rest[i] = ((sym, order), power - 1)
        bumped = _merge_factors(tuple(rest), (((sym, order + 1), 1),))
        nk = (bumped, atoms, scale)
        out[nk] = out.get(nk, 0) + power
    for i, (akey, power) in enumerate(atoms):
        rest = list(atoms)
        if power == 1:
            del rest[i]
        else:
            rest[i] = (akey, power - 1)
        base = (jets, tuple(rest), scale)
        for ik, ic in akey:
            nk = _key_mul(base, ik)
            nc = out.get(nk, 0) + power * ic
            if nc:
                out[nk] = nc
            elif nk in out:
                del out[nk]
    return out


def d_x(p: DiffPoly, n: int = 1) -> DiffPoly:
    """n-th total x-derivative; linear, Leibniz on products."""
    for _ in range(n):
        d = {}
        for key, c in p.terms:
            for nk, nc in _dx_key(key).items():
                v = d.get(nk, 0) + c * nc
                if v:
                    d[nk] = v
                elif nk in d:
                    del d[nk]
        p = DiffPoly._from_dict(d)
    return p


# -- integration -------------------------------------------------------------


@lru_cache(maxsize=None)
def _order_multisets(count: int, total: int):
    """Nondecreasing tuples of `count` nonnegative integers summing to `total`."""
    if count == 0:
        return ((),) if total == 0 else ()
    out = []

    def rec(slots, remaining, minimum, acc):
        if slots == 1:
            if remaining >= minimum:
                out.append(tuple(acc) + (remaining,))
            return
        for first in range(minimum, remaining + 1):
            rec(slots - 1, remaining - first, first, acc + [first])

    rec(count, total, 0, [])
    return tuple(out)


@lru_cache(maxsize=None)
def _component_jets(symdeg, weight: int):
    """All sorted jet-factor tuples with given per-symbol degrees and weight."""
    symdeg = tuple(symdeg)
    if not symdeg:
        return ((),) if weight == 0 else ()
    (sym, deg), rest = symdeg[0], symdeg[1:]
    out = []
    for w_here in range(weight + 1):
        tails = _component_jets(rest, weight - w_here)
        if not tails:
            continue
        for orders in _order_multisets(deg, w_here):
            factors = []
            for order in orders:
                if factors and factors[-1][0] == (sym, order):
                    factors[-1] = ((sym, order), factors[-1][1] + 1)
                else:
                    factors.append(((sym, order), 1))
            head = tuple(factors)
            for tail in tails:
                out.append(tuple(sorted(head + tail)))
    return tuple(out)


class _Reducer:
    """Canonical reduction against the span of d_x images of candidate monomials.

    Pivot monomials are the leading terms (under `_mon_priority`) of the image
    span, so the residual of `reduce` is the true normal form modulo that span
    and does not depend on the candidate processing order.
    """

    __slots__ = ("pivots",)

    def __init__(self, candidate_keys: Iterable):
        rows = []  # (pivot_key, image dict, preimage dict), priority-desc
        for ck in sorted(set(candidate_keys), key=_mon_priority, reverse=True):
            img = {k: Fraction(c) for k, c in _dx_key(ck).items()}
            used = {}
            _reduce_against(rows, img, used)
            if not img:
                continue
            pre = {ck: Fraction(1)}
            for k, c in used.items():
                nc = pre.get(k, 0) - c
                if nc:
                    pre[k] = nc
                elif k in pre:
                    del pre[k]
            pivot = max(img, key=_mon_priority)
            inv = 1 / img[pivot]
            img = {k: c * inv for k, c in img.items()}
            pre = {k: c * inv for k, c in pre.items()}
            _insort_row(rows, (pivot, img, pre))
        self.pivots = rows

    def reduce(self, vec: dict):
        work = dict(vec)
        pre_total = {}
        _reduce_against(self.pivots, work, pre_total)
        return pre_total, work


def _insort_row(rows, row) -> None:
    key = _mon_priority(row[0])
    lo, hi = 0, len(rows)
    while lo < hi:
        mid = (lo + hi) // 2
        if _mon_priority(rows[mid][0]) > key:
            lo = mid + 1
        else:
            hi = mid
    rows.insert(lo, row)


def _reduce_against(rows, work: dict, pre_total: dict) -> None:
    for pivot, img, pre in rows:
        c = work.get(pivot)
        if not c:
            continue
        for k, v in img.items():
            nv = work.get(k, 0) - c * v
            if nv:
                work[k] = nv
            elif k in work:
                del work[k]
        for k, v in pre.items():
            nv = pre_total.get(k, 0) + c * v
            if nv:
                pre_total[k] = nv
            elif k in pre_total:
                del pre_total[k]


@lru_cache(maxsize=None)
def _local_reducer(symdeg, weight: int, scale: int) -> _Reducer:
    if weight < 1:
        return _Reducer(())
    candidates = [
        (jets, (), scale) for jets in _component_jets(symdeg, weight - 1)
    ]
    return _Reducer(candidates)


# Candidate antiderivatives of a single monomial m.  Every monomial V whose
# derivative contains m is of one of two shapes: m with one jet order lowered,
# or (m / nu) * I(nu) for a divisor nu of m that is a legal atom integrand
# (irreducible).  Together with the closure below this makes the per-monomial
# normal form complete, and since the rules depend on the monomial alone the
# normal form is globally consistent: independent computations always produce
# identical atoms, which is what lets them cancel exactly.

_WRAP_DEPTH_CAP = 3

_CLOSURE_CAP = 6000

_NF_ATOM_CACHE = {}


def _jet_lower_candidates(key):
    jets, atoms, scale = key
    out = []
    for i, ((sym, order), power) in enumerate(jets):
        if order < 1:
            continue
        rest = list(jets)
        if power == 1:
            del rest[i]
        else:
            rest[i] = ((sym, order), power - 1)
        lowered = _merge_factors(tuple(rest), (((sym, order - 1), 1),))
        out.append((lowered, atoms, scale))
    return out


def _proper_divisors(key):
    """Nonempty scale-free sub-monomials of m, excluding m itself."""
    jets, atoms, scale = key
    factors = [(("j", f), p) for f, p in jets] + [
        (("a", f), p) for f, p in atoms
    ]
    choices = [[]]
    for (kind, f), p in factors:
        choices = [
            base + [((kind, f), e)] for base in choices for e in range(p + 1)
        ]
    out = []
    for combo in choices:
        jsub = tuple((f, e) for (kind, f), e in combo if e and kind == "j")
        asub = tuple((f, e) for (kind, f), e in combo if e and kind == "a")
        if not (jsub or asub):
            continue
        if jsub == jets and asub == atoms:
            continue
        out.append((jsub, asub, 0))
    return out


def _is_reduced_mono(key) -> bool:
    """Whether the monomial survives integration untouched."""
    jets, atoms, scale = key
    if not atoms:
        weight = _jet_weight(jets)
        if weight < 1:
            return True
        reducer = _local_reducer(_jet_symdeg(jets), weight, scale)
        pre, _res = reducer.reduce({key: Fraction(1)})
        return not pre
    f, _rho = _nf_atom(key)
    return f.is_zero


def _candidates_for(key):
    out = set(_jet_lower_candidates(key))
    if key[1]:
        jets, atoms, scale = key
        # Wraps I(nu) * (m/nu) are useful only when the quotient is a pure
        # atom monomial: otherwise the image's lead outranks m (one more
        # atom on a jet-derivative tail) and no combination can lower it.
        for nu in _proper_divisors(key):
            if nu[0] != jets:
                continue
            akey = ((nu, Fraction(1)),)
            if _atom_depth(akey) > _WRAP_DEPTH_CAP:
                continue
            if not _is_reduced_mono(nu):
                continue
            quotient = ((), _factor_sub(atoms, nu[1]), scale)
            out.add(_key_mul(quotient, ((), ((akey, 1),), 0)))
    return out


def _factor_sub(haystack, needle):
    h = dict(haystack)
    for k, p in needle:
        h[k] -= p
    return tuple(sorted((k, p) for k, p in h.items() if p))


_REDUCER_CACHE = {}


def _closure_reducer(key) -> _Reducer:
    seen = {key}
    frontier = [key]
    candidates = set()
    while frontier:
        batch, frontier = frontier, []
        for mono in batch:
            for cand in _candidates_for(mono):
                if cand in candidates:
                    continue
                candidates.add(cand)
                for img_key in _dx_key(cand):
                    if img_key not in seen:
                        seen.add(img_key)
                        frontier.append(img_key)
            if len(seen) > _CLOSURE_CAP:
                raise EngineError(
                    "integration closure exceeded the safety cap"
                )
    cache_key = frozenset(candidates)
    reducer = _REDUCER_CACHE.get(cache_key)
    if reducer is None:
        reducer = _Reducer(candidates)
        _REDUCER_CACHE[cache_key] = reducer
    return reducer


def _nf_atom(key):
    """Canonical split of one atom-bearing monomial as (d_x preimage, residue).

    Memoized globally; the result depends on the monomial alone, never on the
    expression it came from.
    """
    cached = _NF_ATOM_CACHE.get(key)
    if cached is not None:
        return cached
    # Pre-seed so that self-lookups during closure building treat the
    # monomial as currently irreducible; the final value overwrites this.
    _NF_ATOM_CACHE[key] = (
        DiffPoly.zero(),
        DiffPoly(((key, Fraction(1)),)),
    )
    pre, res = _closure_reducer(key).reduce({key: Fraction(1)})
    if key in res:
        result = (DiffPoly.zero(), DiffPoly(((key, Fraction(1)),)))
    else:
        f_total = dict(pre)
        rho_total = {}
        for mono, coeff in res.items():
            f_part, rho_part = _nf_any(mono)
            for k, c in f_part.terms:
                nc = f_total.get(k, 0) + coeff * c
                if nc:
                    f_total[k] = nc
                elif k in f_total:
                    del f_total[k]
            for k, c in rho_part.terms:
                nc = rho_total.get(k, 0) + coeff * c
                if nc:
                    rho_total[k] = nc
                elif k in rho_total:
                    del rho_total[k]
        result = (
            DiffPoly._from_dict(f_total),
            DiffPoly._from_dict(rho_total),
        )
    _NF_ATOM_CACHE[key] = result
    return result


def _nf_any(key):
    jets, atoms, scale = key
    if atoms:
        return _nf_atom(key)
    weight = _jet_weight(jets)
    if weight < 1:
        return DiffPoly.zero(), DiffPoly(((key, Fraction(1)),))
    reducer = _local_reducer(_jet_symdeg(jets), weight, scale)
    pre, res = reducer.reduce({key: Fraction(1)})
    return DiffPoly._from_dict(pre), DiffPoly._from_dict(res)


def integrate(p: DiffPoly):
    """Split p exactly as d_x(local) + remainder with a canonical remainder.

    The remainder is reduced: feeding it back in returns (0, remainder).
    Constants are irreducible (the ring has no explicit x), and the local
    part never contains a constant term, which pins the integration constant
    to zero.  The split is linear, and equal monomials resolve identically in
    every context.
    """
    f_total = {}
    rho_total = {}
    local_groups = {}
    for key, coeff in p.terms:
        if key[1]:
            f_part, rho_part = _nf_atom(key)
            for k, c in f_part.terms:
                nc = f_total.get(k, 0) + coeff * c
                if nc:
                    f_total[k] = nc
                elif k in f_total:
                    del f_total[k]
            for k, c in rho_part.terms:
                nc = rho_total.get(k, 0) + coeff * c
                if nc:
                    rho_total[k] = nc
                elif k in rho_total:
                    del rho_total[k]
        else:
            jets, _, scale = key
            group = (_jet_symdeg(jets), _jet_weight(jets), scale)
            local_groups.setdefault(group, {})[key] = coeff
    for (symdeg, weight, scale), vec in sorted(local_groups.items()):
        if weight < 1:
            for k, c in vec.items():
                rho_total[k] = rho_total.get(k, 0) + c
            continue
        pre, res = _local_reducer(symdeg, weight, scale).reduce(vec)
        for k, c in pre.items():
            f_total[k] = f_total.get(k, 0) + c
        for k, c in res.items():
            rho_total[k] = rho_total.get(k, 0) + c
    return DiffPoly._from_dict(f_total), DiffPoly._from_dict(rho_total)


def antiderivative(
    p: DiffPoly, nesting_limit: int = DEFAULT_NESTING_LIMIT
) -> DiffPoly:
    """The engine's full antiderivative: local part plus atoms for the rest.

    Each irreducible remainder monomial becomes one monic-integrand atom with
    its coefficient kept outside, so antiderivatives are linear and atoms are
    maximally shareable across independent computations.
    """
    local, rho = integrate(p)
    out = local
    for (jets, atoms, scale), c in rho.terms:
        mono = DiffPoly((((jets, atoms, 0), Fraction(1)),))
        depth = 1 + mono.max_atom_depth()
        if depth > nesting_limit:
            raise NestingTooDeep(
                f"antiderivative atom would have nesting depth {depth} "
                f"(limit {nesting_limit})"
            )
        atom_term = NonlocalAtom(mono).as_poly()
        if scale:
            atom_term = atom_term * DiffPoly.lam(scale)
        out = out + c * atom_term
    return out


# -- prolongation along a flow ------------------------------------------------


def prolong_t(
    p: DiffPoly,
    q_t: DiffPoly,
    r_t: DiffPoly,
    nesting_limit: int = DEFAULT_NESTING_LIMIT,
) -> DiffPoly:
    """Total t-derivative given the flow of q and r.

    Jet variables differentiate as d_t(s^(k)) = d_x^k(s_t); atoms
    differentiate under the integral sign, with the resulting antiderivative
    expressed canonically through `antiderivative`.
    """
    flows = {"q": [q_t], "r": [r_t]}

    def flow_deriv(sym: str, order: int) -> DiffPoly:
        if sym not in flows:
            raise ValueError(f"no flow is defined for symbol {sym!r}")
        seq = flows[sym]
        while len(seq) <= order:
            seq.append(d_x(seq[-1]))
        return seq[order]

    atom_cache = {}

    def rec(poly: DiffPoly) -> DiffPoly:
        out = DiffPoly.zero()
        for key, c in poly.terms:
            jets, atoms, scale = key
            for i, ((sym, order), power) in enumerate(jets):
                rest = list(jets)
                if power == 1:
                    del rest[i]
                else:
                    rest[i] = ((sym, order), power - 1)
                base = DiffPoly((((tuple(rest), atoms, scale), c * power),))
                out = out + base * flow_deriv(sym, order)
            for i, (akey, power) in enumerate(atoms):
                if akey not in atom_cache:
                    atom_cache[akey] = antiderivative(
                        rec(DiffPoly(akey)), nesting_limit
                    )
                rest = list(atoms)
                if power == 1:
                    del rest[i]
                else:
                    rest[i] = (akey, power - 1)
                base = DiffPoly((((jets, tuple(rest), scale), c * power),))
                out = out + base * atom_cache[akey]
        return out

    return rec(p)


# -- substitutions -------------------------------------------------------------


def apply_symbol_map(
    p: DiffPoly,
    mapping: dict,
    nesting_limit: int = DEFAULT_NESTING_LIMIT,
) -> DiffPoly:
    """Rename dependent symbols and re-canonicalize.

    Atom integrands are rebuilt after the substitution: any integrand that
    becomes reducible is resolved through `antiderivative`.
    """
    out = DiffPoly.zero()
    for key, c in p.terms:
        jets, atoms, scale = key
        new_jets = {}
        for (sym, order), power in jets:
            nsym = mapping.get(sym, sym)
            k = (nsym, order)
            new_jets[k] = new_jets.get(k, 0) + power
        term = DiffPoly(
            (((tuple(sorted(new_jets.items())), (), scale), c),)
        )
        for akey, power in atoms:
            rebuilt = antiderivative(
                apply_symbol_map(DiffPoly(akey), mapping, nesting_limit),
                nesting_limit,
            )
            term = term * rebuilt ** power
        out = out + term
    return out


def substitute_r_to_q(
    p: DiffPoly, nesting_limit: int = DEFAULT_NESTING_LIMIT
) -> DiffPoly:
    """Replace every r-jet by the matching q-jet, including inside atoms."""
    return apply_symbol_map(p, {"r": "q"}, nesting_limit)


def swap_q_r(p: DiffPoly, nesting_limit: int = DEFAULT_NESTING_LIMIT) -> DiffPoly:
    """Exchange q and r everywhere, including inside atoms."""
    return apply_symbol_map(p, {"q": "r", "r": "q"}, nesting_limit)


# -- scaling -------------------------------------------------------------------


def _scale_key_q_to_u(key):
    """q-jets renamed to u with one lam per q-degree; returns (key, extra exp)."""
    jets, atoms, scale = key
    new_jets = []
    exponent = 0
    for (sym, order), power in jets:
        if sym == "q":
            new_jets.append((("u", order), power))
            exponent += power
        elif sym == "u":
            new_jets.append(((sym, order), power))
        else:
            raise OddScaleResidue(
                "scaling substitution applies only after r has been "
                "eliminated (found an r jet)"
            )
    new_atoms = []
    for akey, power in atoms:
        sub_exp, sub_key = _scale_atom_q_to_u(akey)
        new_atoms.append((sub_key, power))
        exponent += sub_exp * power
    nk = (tuple(sorted(new_jets)), tuple(sorted(new_atoms)), scale)
    return nk, exponent


@lru_cache(maxsize=None)
def _scale_atom_q_to_u(akey):
    """Scale an atom integrand; the integrand must be lam-homogeneous."""
    exps = set()
    terms = {}
    for key, c in akey:
        nk, e = _scale_key_q_to_u(key)
        exps.add(e)
        terms[nk] = terms.get(nk, 0) + c
    if len(exps) != 1:
        raise OddScaleResidue(
            "atom integrand is not homogeneous under the scaling substitution"
        )
    new_poly = DiffPoly._from_dict(terms)
    return exps.pop(), new_poly.terms


def scale_q_to_u(p: DiffPoly) -> DiffPoly:
    """Substitute q^(k) -> lam * u^(k), keeping lam exponents on monomials."""
    d = {}
    for key, c in p.terms:
        nk, e = _scale_key_q_to_u(key)
        nk = (nk[0], nk[1], nk[2] + e)
        d[nk] = d.get(nk, 0) + c
    return DiffPoly._from_dict(d)


def shift_lambda(p: DiffPoly, shift: int) -> DiffPoly:
    return DiffPoly(
        tuple((((j, a, s + shift), c)) for (j, a, s), c in p.terms)
    )


def resolve_lambda(p: DiffPoly, lambda_sq) -> DiffPoly:
    """Replace lam^2 by the given rational; any odd residual exponent errors."""
    lambda_sq = _fr(lambda_sq)
    d = {}
    for (jets, atoms, scale), c in p.terms:
        if scale % 2:
            raise OddScaleResidue(
                f"odd residual scale exponent {scale} cannot be resolved"
            )
        half = scale // 2
        nk = (jets, atoms, 0)
        d[nk] = d.get(nk, 0) + c * lambda_sq ** half
    return DiffPoly._from_dict(d)


def scale_substitute(p: DiffPoly, lambda_sq, divide: bool = True) -> DiffPoly:
    """Model q = lam*u exactly: substitute, divide once by lam, resolve lam^2.

    With `divide` (the flow convention) every term must end up with an even
    scale exponent, which requires odd q-degree throughout the input.
    """
    out = scale_q_to_u(p)
    if divide:
        out = shift_lambda(out, -1)
    return resolve_lambda(out, lambda_sq)
