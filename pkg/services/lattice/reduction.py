# services/lattice/reduction.py

"""
Gram-matrix lattice reduction and enumeration.

Vectors are integer coefficient vectors; every routine sees the lattice only
through a Gram matrix G (Fraction or mpf), so the same code serves exact
lattices, flowed snapshots and exterior powers.
"""

import logging
from fractions import Fraction
from math import gcd
from typing import Callable, List, Optional, Sequence, Tuple

import mpmath

from services.errors import CapacityError, ComputationError
from services.lattice.numeric import Matrix, Scalar, is_exact, round_nearest, to_mpf

# -------------------- Logging --------------------
logger = logging.getLogger("lattice.reduction")
if not logger.handlers:
    _h = logging.StreamHandler()
    _h.setFormatter(logging.Formatter("[%(asctime)s] %(levelname)s: %(message)s"))
    logger.addHandler(_h)
logger.setLevel(logging.INFO)

LLL_DELTA = Fraction(99, 100)

Basis = List[List[int]]  # list of coefficient columns


def _like(value: Fraction, ref: Scalar) -> Scalar:
    return value if is_exact(ref) else to_mpf(value)


def identity(n: int) -> Basis:
    return [[int(i == j) for i in range(n)] for j in range(n)]


def combine(cols: Basis, y: Sequence[int]) -> List[int]:
    """sum_j y_j * cols[j]."""
    n = len(cols[0])
    out = [0] * n
    for c, col in zip(y, cols):
        if c:
            for i in range(n):
                out[i] += c * col[i]
    return out


def basis_gram(G: Matrix, cols: Basis) -> Matrix:
    """Gram matrix of the basis `cols` under G."""
    n = len(cols)
    Gc_cols = [[sum((G[i][k] * col[k] for k in range(len(col)) if col[k]), 0 * G[0][0]) for i in range(len(G))]
               for col in cols]
    return [[sum((cols[a][i] * Gc_cols[b][i] for i in range(len(G)) if cols[a][i]), 0 * G[0][0])
             for b in range(n)] for a in range(n)]


def gram_schmidt(G: Matrix) -> Tuple[Matrix, List[Scalar]]:
    """mu coefficients and squared Gram-Schmidt lengths of the basis with Gram matrix G."""
    n = len(G)
    zero = 0 * G[0][0]
    mu = [[zero] * n for _ in range(n)]
    r = [[zero] * n for _ in range(n)]
    bstar: List[Scalar] = [zero] * n
    for i in range(n):
        for j in range(i + 1):
            s = G[i][j]
            for k in range(j):
                s -= mu[j][k] * r[i][k]
            r[i][j] = s
            if j < i:
                mu[i][j] = s / bstar[j]
        bstar[i] = r[i][i]
        mu[i][i] = zero + 1
        if not bstar[i] > 0:
            raise ComputationError(f"Gram matrix is not positive definite (b*_{i} = {bstar[i]})")
    return mu, bstar


def lll_reduce(G: Matrix, cols: Optional[Basis] = None, start: int = 0,
               delta: Fraction = LLL_DELTA) -> Basis:
    """
    LLL-reduces the basis `cols` (identity by default) under G and returns it.

    The first `start` vectors are frozen: they may be used for size reduction
    but never swapped, so span(cols[:k]) is preserved for every k <= start.
    """
    n = len(G)
    cols = [list(c) for c in (cols if cols is not None else identity(n))]
    Gc = basis_gram(G, cols)
    mu, bstar = gram_schmidt(Gc)
    dlt = _like(delta, G[0][0])
    k = max(start, 1)
    swaps = 0
    while k < n:
        for j in range(k - 1, -1, -1):
            q = round_nearest(mu[k][j])
            if q == 0:
                continue
            cols[k] = [a - q * b for a, b in zip(cols[k], cols[j])]
            gkk = Gc[k][k] - 2 * q * Gc[k][j] + q * q * Gc[j][j]
            for i in range(n):
                if i != k:
                    Gc[k][i] = Gc[k][i] - q * Gc[j][i]
                    Gc[i][k] = Gc[k][i]
            Gc[k][k] = gkk
            for i in range(j):
                mu[k][i] -= q * mu[j][i]
            mu[k][j] -= q
        if k > start and bstar[k] < (dlt - mu[k][k - 1] * mu[k][k - 1]) * bstar[k - 1]:
            cols[k - 1], cols[k] = cols[k], cols[k - 1]
            Gc[k - 1], Gc[k] = Gc[k], Gc[k - 1]
            for row in Gc:
                row[k - 1], row[k] = row[k], row[k - 1]
            mu, bstar = gram_schmidt(Gc)
            swaps += 1
            k = max(k - 1, start, 1)
        else:
            k += 1
    logger.debug(f"LLL on {n} vectors finished after {swaps} swaps")
    return cols


# ---- Enumeration ----

class _Enumerator:
    """
    Schnorr-Euchner enumeration over integer y with y^T Gc y within a shrinking radius.

    `floor` restricts to vectors with a nonzero coordinate at index >= floor.
    The first nonzero coordinate from the top is positive, which removes +-pairs.
    `keep` best accepted vectors are retained; keep=None collects everything
    within the fixed radius.
    """

    def __init__(self, Gc: Matrix, accept: Callable[[List[int]], bool], radius: Scalar,
                 keep: Optional[int], floor: int, cap: int, envelope: Scalar):
        self.mu, self.bstar = gram_schmidt(Gc)
        self.n = len(Gc)
        self.accept = accept
        self.keep = keep
        self.floor = floor
        self.cap = cap
        self.pad = 1 + envelope
        self.radius = radius
        self.found: List[Tuple[Scalar, Tuple[int, ...]]] = []
        self.nodes = 0

    def seed(self, norm: Scalar, y: Sequence[int]) -> None:
        self._record(norm, tuple(y))

    def _record(self, norm: Scalar, y: Tuple[int, ...]) -> None:
        if any(f[1] == y for f in self.found):
            return
        self.found.append((norm, y))
        self.found.sort(key=lambda f: (f[0], f[1]))
        if self.keep is not None and len(self.found) >= self.keep:
            del self.found[self.keep:]
            self.radius = self.found[-1][0]

    def run(self) -> List[Tuple[Scalar, Tuple[int, ...]]]:
        x = [0] * self.n
        zero = 0 * self.bstar[0]
        self._descend(self.n - 1, x, zero, True)
        return self.found

    def _descend(self, j: int, x: List[int], partial: Scalar, zero_above: bool) -> None:
        if zero_above and j < self.floor:
            return
        bj = self.bstar[j]
        c = 0 * bj
        for i in range(j + 1, self.n):
            if x[i]:
                c -= self.mu[i][j] * x[i]
        budget = self.radius * self.pad - partial
        if budget < 0:
            return
        spread = mpmath.sqrt(to_mpf(budget / bj)) * (1 + mpmath.ldexp(1, -40)) + 1
        lo = int(mpmath.floor(to_mpf(c) - spread))
        hi = int(mpmath.ceil(to_mpf(c) + spread))
        if zero_above:
            lo = max(lo, 0)
            if j == 0:
                lo, hi = 1, 1
        if hi - lo > self.cap:
            raise CapacityError(f"enumeration range of {hi - lo} values at level {j} exceeds cap {self.cap}")
        candidates = sorted(range(lo, hi + 1), key=lambda v: (abs(v - c), v))
        for v in candidates:
            diff = v - c
            p = partial + diff * diff * bj
            if p > self.radius * self.pad:
                break
            self.nodes += 1
            if self.nodes > self.cap:
                raise CapacityError(f"enumeration visited more than {self.cap} vectors")
            x[j] = v
            if j == 0:
                if any(x) and self.accept(x):
                    self._record(p, tuple(x))
            else:
                self._descend(j - 1, x, p, zero_above and v == 0)
        x[j] = 0


def shortest_outside(Gc: Matrix, level: int, cap: int, envelope: Scalar = Fraction(0)) -> Tuple[Scalar, List[int]]:
    """Shortest y (in the basis of Gc) with some y_j != 0 for j >= level."""
    n = len(Gc)
    start = min(range(level, n), key=lambda j: Gc[j][j])
    e = [int(i == start) for i in range(n)]
    en = _Enumerator(Gc, lambda y: True, Gc[start][start], keep=1, floor=level, cap=cap, envelope=envelope)
    en.seed(Gc[start][start], e)
    norm, y = en.run()[0]
    return norm, list(y)


def search_best(Gc: Matrix, accept: Callable[[List[int]], bool], seeds: List[Tuple[Scalar, List[int]]],
                keep: int, cap: int, envelope: Scalar = Fraction(0)) -> List[Tuple[Scalar, Tuple[int, ...]]]:
    """
    The `keep` shortest accepted vectors, starting from accepted seeds whose norms
    bound the search radius.
    """
    if not seeds:
        raise ComputationError("search_best needs at least one seed")
    seeds = sorted(seeds, key=lambda s: s[0])
    radius = seeds[min(keep, len(seeds)) - 1][0]
    en = _Enumerator(Gc, accept, radius, keep=keep, floor=0, cap=cap, envelope=envelope)
    for norm, y in seeds:
        en.seed(norm, _normalize_sign(y))
    return en.run()


def enumerate_short(Gc: Matrix, radius_sq: Scalar, cap: int) -> List[Tuple[Scalar, Tuple[int, ...]]]:
    """All nonzero y (up to sign) with y^T Gc y <= radius_sq, sorted by norm."""
    en = _Enumerator(Gc, lambda y: True, radius_sq, keep=None, floor=0, cap=cap, envelope=0 * radius_sq)
    return en.run()


def _normalize_sign(y: Sequence[int]) -> Tuple[int, ...]:
    for v in reversed(y):
        if v:
            return tuple(y) if v > 0 else tuple(-c for c in y)
    return tuple(y)


# ---- Integer linear algebra ----

def vector_gcd(v: Sequence[int]) -> int:
    g = 0
    for c in v:
        g = gcd(g, int(c))
    return g


def complete_to_unimodular(p: Sequence[int]) -> Basis:
    """Integer basis (columns) with det +-1 whose first column is the primitive vector p."""
    n = len(p)
    if vector_gcd(p) != 1:
        raise ComputationError(f"vector {list(p)} is not primitive")
    v = list(p)
    U = identity(n)  # columns; invariant: U * (T p) = p with T the accumulated row operations
    while sum(1 for c in v if c) > 1:
        i = min((k for k in range(n) if v[k]), key=lambda k: abs(v[k]))
        for j in range(n):
            if j != i and v[j]:
                q = v[j] // v[i]
                v[j] -= q * v[i]
                # row_j -= q row_i on T  <=>  col_i += q col_j on U
                U[i] = [a + q * b for a, b in zip(U[i], U[j])]
    i = next(k for k in range(n) if v[k])
    if i != 0:
        v[0], v[i] = v[i], v[0]
        U[0], U[i] = U[i], U[0]
    if v[0] < 0:
        U[0] = [-a for a in U[0]]
    return U


def independent_subset(vectors: Sequence[Sequence[int]]) -> List[List[int]]:
    """Greedy maximal linearly independent subset (over Q)."""
    echelon: List[List[Fraction]] = []
    pivots: List[int] = []
    chosen: List[List[int]] = []
    for vec in vectors:
        r = [Fraction(c) for c in vec]
        for e, p in zip(echelon, pivots):
            if r[p]:
                f = r[p] / e[p]
                r = [a - f * b for a, b in zip(r, e)]
        lead = next((j for j, c in enumerate(r) if c), None)
        if lead is not None:
            echelon.append(r)
            pivots.append(lead)
            chosen.append([int(c) for c in vec])
    return chosen


def _kernel_mod_p(vectors: List[List[int]], p: int) -> Optional[List[int]]:
    """Nonzero c in (Z/p)^k with sum c_i v_i = 0 mod p, or None."""
    k, n = len(vectors), len(vectors[0])
    # rows = coordinates, columns = vectors
    A = [[vectors[j][i] % p for j in range(k)] for i in range(n)]
    pivot_cols: List[int] = []
    row = 0
    for col in range(k):
        piv = next((r for r in range(row, n) if A[r][col] % p), None)
        if piv is None:
            continue
        A[row], A[piv] = A[piv], A[row]
        inv = pow(A[row][col], -1, p)
        A[row] = [(a * inv) % p for a in A[row]]
        for r in range(n):
            if r != row and A[r][col]:
                f = A[r][col]
                A[r] = [(a - f * b) % p for a, b in zip(A[r], A[row])]
        pivot_cols.append(col)
        row += 1
    free = next((c for c in range(k) if c not in pivot_cols), None)
    if free is None:
        return None
    c = [0] * k
    c[free] = 1
    for r, pc in enumerate(pivot_cols):
        c[pc] = (-A[r][free]) % p
    return c


def _smallest_prime_factor(n: int) -> int:
    n = abs(n)
    if n % 2 == 0:
        return 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return f
        f += 2
    return n


def saturate(vectors: Sequence[Sequence[int]]) -> List[List[int]]:
    """Z-basis of Z^d ∩ span_Q(vectors)."""
    from services.lattice.subspaces import plucker_coordinates  # local: subspaces imports this module

    basis = independent_subset(vectors)
    if not basis:
        raise ComputationError("cannot saturate the zero subspace")
    while True:
        g = vector_gcd(plucker_coordinates(basis).values())
        if g == 1:
            return basis
        p = _smallest_prime_factor(g)
        c = _kernel_mod_p(basis, p)
        if c is None:
            raise ComputationError(f"saturation stalled at index {g}")
        i = next(k for k in range(len(c)) if c[k])
        inv = pow(c[i], -1, p)
        c = [(v * inv) % p for v in c]
        combo = [sum(c[j] * basis[j][m] for j in range(len(basis))) for m in range(len(basis[0]))]
        basis[i] = [v // p for v in combo]


def rational_nullspace(rows: Sequence[Sequence[Fraction]]) -> List[List[Fraction]]:
    """Basis of {y : M y = 0} for the matrix with the given rows."""
    if not rows:
        return []
    n = len(rows[0])
    A = [[Fraction(v) for v in r] for r in rows]
    pivots: List[int] = []
    row = 0
    for col in range(n):
        piv = next((r for r in range(row, len(A)) if A[r][col] != 0), None)
        if piv is None:
            continue
        A[row], A[piv] = A[piv], A[row]
        p = A[row][col]
        A[row] = [v / p for v in A[row]]
        for r in range(len(A)):
            if r != row and A[r][col] != 0:
                f = A[r][col]
                A[r] = [a - f * b for a, b in zip(A[r], A[row])]
        pivots.append(col)
        row += 1
        if row == len(A):
            break
    out = []
    for free in (c for c in range(n) if c not in pivots):
        y = [Fraction(0)] * n
        y[free] = Fraction(1)
        for r, pc in enumerate(pivots):
            y[pc] = -A[r][free]
        out.append(y)
    return out


def integer_nullspace(rows: Sequence[Sequence[Fraction]]) -> List[List[int]]:
    """Primitive integer basis of the rational nullspace, saturated."""
    vecs = []
    for y in rational_nullspace(rows):
        den = 1
        for v in y:
            den = den * v.denominator // gcd(den, v.denominator)
        ints = [int(v * den) for v in y]
        g = vector_gcd(ints)
        vecs.append([c // g for c in ints])
    return saturate(vecs) if vecs else []
