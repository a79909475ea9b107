# tests/factories.py

"""Seeded random lattices and subspaces for property tests."""

import random
from fractions import Fraction
from typing import List

import numpy as np

from services.lattice.lattice_types import Lattice


def random_unimodular(d: int, rng: random.Random, steps: int = 12) -> List[List[int]]:
    """Product of elementary integer matrices (rows)."""
    U = [[int(i == j) for j in range(d)] for i in range(d)]
    for _ in range(steps):
        i, j = rng.sample(range(d), 2)
        c = rng.choice([-2, -1, 1, 2])
        for k in range(d):
            U[i][k] += c * U[j][k]
    return U


def random_diagonal(d: int, rng: random.Random) -> List[Fraction]:
    """Rational diagonal with product 1."""
    entries = [Fraction(rng.choice([1, 2, 3, 4]), rng.choice([1, 2, 3, 4])) for _ in range(d - 1)]
    last = Fraction(1)
    for e in entries:
        last /= e
    return entries + [last]


def rebased(x: Lattice, U: List[List[int]]) -> Lattice:
    """x written in the basis g U."""
    g = x.matrix()
    d = x.d
    gu = [[sum((g[i][k] * U[k][j] for k in range(d)), Fraction(0)) for j in range(d)] for i in range(d)]
    return Lattice(d=d, columns=[[gu[i][j] for i in range(d)] for j in range(d)])


def random_lattice(d: int, seed: int) -> Lattice:
    """D Z^d for a random rational diagonal D, in a scrambled basis."""
    rng = random.Random(seed)
    D = Lattice.diagonal(random_diagonal(d, rng))
    return rebased(D, random_unimodular(d, rng))


def shear_lattice(d: int, seed: int) -> Lattice:
    """Upper unitriangular rational basis; not a rescaled copy of Z^d in general."""
    rng = random.Random(seed)
    cols = []
    for j in range(d):
        col = [Fraction(rng.randint(-3, 3), rng.choice([2, 3, 5])) if i < j else Fraction(int(i == j))
               for i in range(d)]
        cols.append(col)
    return Lattice(d=d, columns=cols)


def random_coefficients(d: int, seed: int, count: int) -> List[List[int]]:
    """`count` independent integer coefficient vectors with entries in [-3, 3]."""
    gen = np.random.default_rng(seed)
    while True:
        vecs = gen.integers(-3, 4, size=(count, d))
        if np.linalg.matrix_rank(vecs) == count:
            return [[int(c) for c in v] for v in vecs]
