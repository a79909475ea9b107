# services/lattice/subspaces.py

"""
Rational subspaces through their Plücker vectors.

covol(V) = ||v_1 ∧ ... ∧ v_l||, so minimal covolumes are shortest primitive
decomposable vectors of the exterior-power lattice, whose Gram matrix is the
l-th compound of the lattice Gram matrix.
"""

import logging
import math
from fractions import Fraction
from itertools import combinations
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import mpmath

from services.errors import ComputationError, DimensionError, UniquenessError
from services.lattice.lattice_types import (
    DEFAULT_MAX_VECTORS,
    Lattice,
    LatticeSnapshot,
    MinimaResult,
    RationalSubspace,
    ToleranceConfig,
    base_lattice,
    geometry_of,
)
from services.lattice.minima import successive_minima
from services.lattice.numeric import (
    Matrix,
    Scalar,
    determinant,
    envelope,
    integer_inverse,
    precision_context,
    to_mpf,
)
from services.lattice.reduction import (
    basis_gram,
    combine,
    independent_subset,
    lll_reduce,
    rational_nullspace,
    saturate,
    search_best,
    vector_gcd,
)

# -------------------- Logging --------------------
logger = logging.getLogger("lattice.subspaces")
if not logger.handlers:
    _h = logging.StreamHandler()
    _h.setFormatter(logging.Formatter("[%(asctime)s] %(levelname)s: %(message)s"))
    logger.addHandler(_h)
logger.setLevel(logging.INFO)

LatticeLike = Union[Lattice, LatticeSnapshot]
Plucker = Dict[Tuple[int, ...], int]


# ---- Plücker coordinates ----

def plucker_coordinates(vectors: Sequence[Sequence[Any]]) -> Dict[Tuple[int, ...], Any]:
    """Maximal minors of the d x l matrix with columns `vectors`, keyed by sorted row sets."""
    l = len(vectors)
    d = len(vectors[0])
    integral = all(isinstance(c, int) for v in vectors for c in v)
    out = {}
    for rows in combinations(range(d), l):
        minor = determinant([[vectors[j][i] for j in range(l)] for i in rows])
        out[rows] = int(minor) if integral else minor
    return out


def _signed(p: Plucker, seq: Sequence[int]) -> int:
    """Coordinate of an ordered index sequence: sign of the sorting permutation times p[sorted]."""
    if len(set(seq)) != len(seq):
        return 0
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign * p.get(tuple(sorted(seq)), 0)


def is_decomposable(p: Plucker, d: int, l: int) -> bool:
    """All quadratic Plücker relations, in exact integers."""
    if l <= 1 or l >= d - 1:
        return True
    for I in combinations(range(d), l - 1):
        for J in combinations(range(d), l + 1):
            total = 0
            for k, j in enumerate(J):
                a = _signed(p, list(I) + [j])
                if a:
                    total += (-1) ** k * a * _signed(p, J[:k] + J[k + 1:])
            if total:
                return False
    return True


def generators_from_plucker(p: Plucker, d: int, l: int) -> List[List[int]]:
    """Z-basis of Z^d ∩ V for the decomposable primitive p = covector of V."""
    vecs: List[List[int]] = []
    for J in combinations(range(d), l - 1):
        v = [0] * d
        for i in range(d):
            if i not in J:
                v[i] = _signed(p, list(J) + [i])
        if any(v):
            vecs.append(v)
    basis = independent_subset(vecs)
    if len(basis) != l:
        raise ComputationError(f"Plücker vector spans a {len(basis)}-dimensional space, expected {l}")
    gens = saturate(basis)
    check = plucker_coordinates(gens)
    if not (all(check[k] == p.get(k, 0) for k in check) or all(check[k] == -p.get(k, 0) for k in check)):
        raise ComputationError("recovered generators do not reproduce the Plücker vector")
    return gens


def exterior_gram(G: Matrix, l: int) -> Tuple[Matrix, List[Tuple[int, ...]]]:
    """l-th compound of G on the standard basis e_I of the exterior power."""
    index = list(combinations(range(len(G)), l))
    Gl = [[determinant([[G[i][j] for j in J] for i in I]) for J in index] for I in index]
    return Gl, index


def covolume_squared(x: LatticeLike, V: Union[RationalSubspace, Sequence[Sequence[int]]]) -> Scalar:
    """det(X^T G X) for the generator matrix X."""
    gens = V.generators if isinstance(V, RationalSubspace) else V
    G, bits = geometry_of(x)
    with precision_context(bits):
        return determinant(basis_gram(G, [list(g) for g in gens]))


# ---- Minimal covolumes ----

def alpha_min_covol(x: LatticeLike, l: int, minima: Optional[MinimaResult] = None,
                    max_vectors: int = DEFAULT_MAX_VECTORS) -> Tuple[Scalar, RationalSubspace, Optional[Scalar]]:
    """alpha_l(x), an attaining subspace and the second-smallest covolume (None for l = d)."""
    best_sq, V, second_sq = min_covolume_sq(x, l, minima=minima, max_vectors=max_vectors)
    _, bits = geometry_of(x)
    with precision_context(bits):
        return _sqrt(best_sq), V, (_sqrt(second_sq) if second_sq is not None else None)


def min_covolume_sq(x: LatticeLike, l: int, minima: Optional[MinimaResult] = None,
                    max_vectors: int = DEFAULT_MAX_VECTORS) -> Tuple[Scalar, RationalSubspace, Optional[Scalar]]:
    """
    Squared form of alpha_min_covol.

    Exterior-power search over primitive decomposable vectors, seeded by the
    wedges of the Minkowski vectors v_1..v_l and v_1..v_{l-1}, v_{l+1}; the
    first seed has norm <= lambda_1...lambda_l, so no candidate is missed.
    """
    base = base_lattice(x)
    d = base.d
    if not 1 <= l <= d:
        raise DimensionError(f"l={l} outside 1..{d}")
    if l == d:
        return Fraction(1), RationalSubspace(lattice=base, generators=[[int(i == j) for i in range(d)]
                                                                         for j in range(d)]), None

    m = minima or successive_minima(x, max_vectors=max_vectors)
    G, bits = geometry_of(x)
    with precision_context(bits):
        env = envelope(bits)
        Gl, index = exterior_gram(G, l)
        cols = lll_reduce(Gl)
        inv = integer_inverse([[cols[j][i] for j in range(len(cols))] for i in range(len(cols))])
        Gc = basis_gram(Gl, cols)

        def to_reduced(pl: Dict[Tuple[int, ...], int]) -> List[int]:
            vec = [pl[I] for I in index]
            g = vector_gcd(vec)
            vec = [c // g for c in vec]
            return [sum(inv[i][k] * vec[k] for k in range(len(vec))) for i in range(len(vec))]

        def as_plucker(y: Sequence[int]) -> Plucker:
            vec = combine(cols, y)
            return {I: vec[k] for k, I in enumerate(index)}

        def accept(y: List[int]) -> bool:
            return vector_gcd(y) == 1 and is_decomposable(as_plucker(y), d, l)

        vs = [list(v) for v in m.vectors]
        seeds = []
        for subset in (vs[:l], vs[:l - 1] + [vs[l]]):
            y = to_reduced({k: int(v) for k, v in plucker_coordinates(subset).items()})
            seeds.append((_quad(Gc, y), y))
        found = search_best(Gc, accept, seeds, keep=2, cap=max_vectors, envelope=env)

        best_sq, best_y = found[0]
        second_sq = found[1][0] if len(found) > 1 else None
        gens = generators_from_plucker(as_plucker(best_y), d, l)
    logger.debug(f"alpha_{l}: best^2 {float(best_sq):.6g}, second^2 {float(second_sq) if second_sq else None}")
    return best_sq, RationalSubspace(lattice=base, generators=gens), second_sq


def _quad(G: Matrix, y: Sequence[int]) -> Scalar:
    n = len(y)
    return sum((y[i] * G[i][j] * y[j] for i in range(n) for j in range(n) if y[i] and y[j]), 0 * G[0][0])


def _sqrt(v: Scalar) -> Scalar:
    if isinstance(v, Fraction):
        num, den = _isqrt_exact(v.numerator), _isqrt_exact(v.denominator)
        if num is not None and den is not None:
            return Fraction(num, den)
    return mpmath.sqrt(to_mpf(v))


def _isqrt_exact(n: int) -> Optional[int]:
    r = math.isqrt(n)
    return r if r * r == n else None


def unique_small_subspace(x: LatticeLike, l: int, cfg: ToleranceConfig,
                          minima: Optional[MinimaResult] = None) -> RationalSubspace:
    """V_l(x), after checking eta_l(x) < eta0 and a strict covolume gap to the runner-up."""
    d = base_lattice(x).d
    if not 1 <= l <= d - 1:
        raise DimensionError(f"l={l} outside 1..{d - 1}")
    m = minima or successive_minima(x, max_vectors=cfg.max_vectors)
    if not m.eta_below(l, cfg.eta0):
        raise UniquenessError(f"eta_{l} = {float(m.eta(l)):.6g} is not below eta0 = {cfg.eta0}")
    best_sq, V, second_sq = min_covolume_sq(x, l, minima=m, max_vectors=cfg.max_vectors)
    _, bits = geometry_of(x)
    with precision_context(bits):
        env = envelope(bits)
        if second_sq is None or not second_sq > best_sq * (1 + env) ** 2:
            raise UniquenessError(
                f"covolume gap for l={l} not verified: best^2 {float(best_sq):.6g}, "
                f"second^2 {float(second_sq) if second_sq is not None else 'none'}"
            )
    return V


# ---- Subspace lattice operations ----

def _same_lattice(L: RationalSubspace, M: RationalSubspace) -> Lattice:
    if L.lattice != M.lattice:
        raise DimensionError("subspaces belong to different lattices")
    return L.lattice


def subspace_sum(L: RationalSubspace, M: RationalSubspace) -> RationalSubspace:
    lat = _same_lattice(L, M)
    return RationalSubspace(lattice=lat, generators=saturate([list(g) for g in L.generators + M.generators]))


def subspace_intersection(L: RationalSubspace, M: RationalSubspace) -> Optional[RationalSubspace]:
    """L ∩ M, or None when the intersection is zero."""
    lat = _same_lattice(L, M)
    a, b = len(L.generators), len(M.generators)
    rows = [[Fraction(L.generators[j][i]) for j in range(a)] + [Fraction(-M.generators[j][i]) for j in range(b)]
            for i in range(lat.d)]
    kernel = rational_nullspace(rows)
    if not kernel:
        return None
    vecs = []
    for y in kernel:
        v = [sum((y[j] * L.generators[j][i] for j in range(a)), Fraction(0)) for i in range(lat.d)]
        den = 1
        for c in v:
            den = den * c.denominator // math.gcd(den, c.denominator)
        vecs.append([int(c * den) for c in v])
    return RationalSubspace(lattice=lat, generators=saturate(vecs))


def submodularity_gap(L: RationalSubspace, M: RationalSubspace) -> Scalar:
    """covol(L)^2 covol(M)^2 - covol(L ∩ M)^2 covol(L + M)^2; nonnegative for every pair."""
    lat = _same_lattice(L, M)
    inter = subspace_intersection(L, M)
    s = subspace_sum(L, M)
    cap_sq = covolume_squared(lat, inter) if inter is not None else 1
    return covolume_squared(lat, L) * covolume_squared(lat, M) - cap_sq * covolume_squared(lat, s)
