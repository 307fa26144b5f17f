import random
from fractions import Fraction

import pytest

from cckp.diffring import DiffPoly, antiderivative
from cckp.grammar import parse_poly

SEED = 0xC0FFEE


def P(text: str) -> DiffPoly:
    return parse_poly(text)


@pytest.fixture
def rng():
    return random.Random(SEED)


_ATOM_POOL_SOURCES = ("q^2", "q*r", "r^2")


def random_poly(
    rng,
    max_terms=3,
    max_factors=2,
    max_order=2,
    max_power=2,
    max_weight=4,
    symbols=("q", "r"),
    allow_atoms=False,
    allow_scale=False,
    allow_const=True,
):
    out = DiffPoly.zero()
    for _ in range(rng.randint(0 if allow_const else 1, max_terms)):
        coeff = Fraction(rng.randint(-6, 6), rng.randint(1, 4))
        if not coeff:
            coeff = Fraction(1)
        term = DiffPoly.const(coeff)
        weight = 0
        for _ in range(rng.randint(0 if allow_const else 1, max_factors)):
            sym = rng.choice(symbols)
            order = rng.randint(0, max_order)
            power = rng.randint(1, max_power)
            if weight + order * power > max_weight:
                order = 0
            weight += order * power
            term = term * DiffPoly.jet(sym, order) ** power
        if allow_atoms and rng.random() < 0.4:
            term = term * antiderivative(P(rng.choice(_ATOM_POOL_SOURCES)))
        if allow_scale and rng.random() < 0.3:
            term = term * DiffPoly.lam(rng.randint(-2, 2))
        out = out + term
    return out


def random_local_poly(rng, **kw):
    kw.setdefault("allow_atoms", False)
    return random_poly(rng, **kw)
