# services/weyl/parabolic.py

"""
Parabolic / Weyl combinatorics for a fixed diagonal flow.

All arithmetic is exact (Fraction). Orientations are canonical double-coset
representatives, so every function here is a class function of [w]_P.
"""

from collections import Counter
from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from typing import Iterator, List, Sequence, Tuple

import networkx as nx

from services.errors import DimensionError
from services.weyl.weyl_types import (
    DiagonalFlow,
    LinearFunctional,
    Multiset,
    Orientation,
    ParabolicSubgroup,
    as_multiset,
)


def _check_dims(flow: DiagonalFlow, P: ParabolicSubgroup, w: Orientation = None) -> None:
    if flow.d != P.d:
        raise DimensionError(f"flow has d={flow.d} but parabolic has d={P.d}")
    if w is not None and w.parabolic != P:
        raise DimensionError(f"orientation belongs to {w.parabolic.name}, not {P.name}")


def enumerate_parabolics(d: int) -> List[ParabolicSubgroup]:
    """All 2^(d-1) standard parabolics, lexicographic on jump sets (G first)."""
    if d < 2:
        raise DimensionError(f"dimension must be >= 2, got {d}")
    subsets = [c for k in range(d) for c in combinations(range(1, d), k)]
    subsets.sort()
    return [ParabolicSubgroup(d=d, jumps=s) for s in subsets]


def contains(P: ParabolicSubgroup, Q: ParabolicSubgroup) -> bool:
    """Q is a subgroup of P, i.e. eta(P) is a subset of eta(Q)."""
    return P.d == Q.d and set(P.jumps) <= set(Q.jumps)


@lru_cache(maxsize=16)
def parabolic_poset(d: int) -> nx.DiGraph:
    """Inclusion order on standard parabolics: an edge Q -> P means Q is a subgroup of P."""
    g = nx.DiGraph()
    parabolics = enumerate_parabolics(d)
    for P in parabolics:
        g.add_node(P.jumps, parabolic=P)
    for Q in parabolics:
        for P in parabolics:
            if P != Q and contains(P, Q):
                g.add_edge(Q.jumps, P.jumps)
    return g


def intermediate_parabolics(Q: ParabolicSubgroup, P: ParabolicSubgroup) -> List[ParabolicSubgroup]:
    """All H with Q <= H <= P, ordered by jump set lexicographically."""
    if not contains(P, Q):
        raise DimensionError(f"{Q.name} is not contained in {P.name}")
    g = parabolic_poset(P.d)
    keys = {Q.jumps, P.jumps}
    keys |= nx.descendants(g, Q.jumps) & nx.ancestors(g, P.jumps)
    return sorted((g.nodes[k]["parabolic"] for k in keys), key=lambda H: H.jumps)


def _block_multisets(values: Counter, sizes: Sequence[int]) -> Iterator[Tuple[Multiset, ...]]:
    if not sizes:
        yield ()
        return
    first, rest = sizes[0], sizes[1:]
    distinct = sorted(values)
    for chosen in _sub_multisets(values, distinct, first):
        remaining = values - Counter(chosen)
        for tail in _block_multisets(remaining, rest):
            yield (chosen,) + tail


def _sub_multisets(values: Counter, keys: List[Fraction], size: int) -> Iterator[Multiset]:
    if size == 0:
        yield ()
        return
    if not keys:
        return
    head, tail = keys[0], keys[1:]
    for take in range(min(values[head], size), -1, -1):
        for rest in _sub_multisets(values, tail, size - take):
            yield as_multiset((head,) * take + rest)


def weyl_double_cosets(flow: DiagonalFlow, P: ParabolicSubgroup) -> List[Orientation]:
    """
    One canonical Orientation per element of W_{P,a}, sorted by representative.
    """
    _check_dims(flow, P)
    seen = {}
    for blocks in _block_multisets(Counter(flow.alpha), P.block_sizes):
        flag: List[Multiset] = []
        acc: List[Fraction] = []
        for block in blocks[:-1]:
            acc.extend(block)
            flag.append(as_multiset(acc))
        w = Orientation.from_multiset_flag(flow, P, flag)
        seen[w.rep] = w
    return [seen[k] for k in sorted(seen)]


def entropy(flow: DiagonalFlow, P: ParabolicSubgroup, w: Orientation) -> Fraction:
    """
    h(P, a^w): positive parts of alpha_w(i) - alpha_w(j) over the support of P,
    i.e. i != j with block(i) <= block(j).
    """
    _check_dims(flow, P, w)
    a = w.permuted_alpha(flow)
    block = P.block_of
    total = Fraction(0)
    for i in range(flow.d):
        for j in range(flow.d):
            if i != j and block[i] <= block[j] and a[i] > a[j]:
                total += a[i] - a[j]
    return total


def project(flow: DiagonalFlow, P: ParabolicSubgroup, w: Orientation) -> Tuple[Fraction, ...]:
    """pi_P(alpha^w): block averages of the permuted generator."""
    _check_dims(flow, P, w)
    a = w.permuted_alpha(flow)
    out: List[Fraction] = []
    for blk in P.blocks:
        mean = sum((a[i] for i in blk), Fraction(0)) / len(blk)
        out.extend([mean] * len(blk))
    return tuple(out)


def multiset_le(E1: Sequence[Fraction], E2: Sequence[Fraction]) -> bool:
    """Product order on eigenvalue multisets, taken on exponents (sums)."""
    if len(E1) != len(E2):
        raise DimensionError(f"multisets of different sizes {len(E1)} and {len(E2)}")
    return sum(E1, Fraction(0)) <= sum(E2, Fraction(0))


def h_phi(flow: DiagonalFlow, P: ParabolicSubgroup, w: Orientation, phi: LinearFunctional) -> Fraction:
    if phi.d != flow.d:
        raise DimensionError(f"phi has d={phi.d}, flow has d={flow.d}")
    return entropy(flow, P, w) - phi(project(flow, P, w))


def restrict(flow: DiagonalFlow, w: Orientation, H: ParabolicSubgroup) -> Orientation:
    """[w]_Q coarsened to [w]_H for Q <= H."""
    if not contains(H, w.parabolic):
        raise DimensionError(f"{w.parabolic.name} is not contained in {H.name}")
    return Orientation.from_permutation(flow, H, w.rep)
