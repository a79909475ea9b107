# services/lattice/minima.py

import logging
from typing import Any, List, Optional, Union

from services.errors import PrecisionError
from services.lattice.lattice_types import (
    DEFAULT_MAX_VECTORS,
    Lattice,
    LatticeSnapshot,
    MinimaResult,
    geometry_of,
)
from services.lattice.numeric import envelope, precision_context
from services.lattice.reduction import (
    Basis,
    basis_gram,
    combine,
    complete_to_unimodular,
    lll_reduce,
    shortest_outside,
    vector_gcd,
)

# -------------------- Logging --------------------
logger = logging.getLogger("lattice.minima")
if not logger.handlers:
    _h = logging.StreamHandler()
    _h.setFormatter(logging.Formatter("[%(asctime)s] %(levelname)s: %(message)s"))
    logger.addHandler(_h)
logger.setLevel(logging.INFO)

LatticeLike = Union[Lattice, LatticeSnapshot]


def _rebase(cols: Basis, y: List[int], i: int) -> Basis:
    """Replace cols[i:] by a basis of the same span whose first vector is the primitive tail of y."""
    tail = y[i:]
    g = vector_gcd(tail)
    W = complete_to_unimodular([c // g for c in tail])
    new_tail = [combine(cols[i:], w) for w in W]
    return cols[:i] + new_tail


def successive_minima(x: LatticeLike, hint: Optional[Basis] = None,
                      max_vectors: int = DEFAULT_MAX_VECTORS) -> MinimaResult:
    """
    lambda_1 <= ... <= lambda_d with witness vectors.

    lambda_{i+1} is the shortest vector outside span(v_1..v_i); after each step
    the basis is re-completed so that this span is a basis prefix, and the tail
    is LLL-reduced again. `hint` is a previously reduced basis used as a warm start.

    Consecutive minima that come back inverted by less than the envelope are a tie
    and are equalized; a larger inversion raises PrecisionError.
    """
    G, bits = geometry_of(x)
    d = len(G)
    with precision_context(bits):
        env = envelope(bits)
        cols = lll_reduce(G, cols=hint)
        reduced = [list(c) for c in cols]
        minima_sq = []
        vectors = []
        for i in range(d):
            Gc = basis_gram(G, cols)
            norm, y = shortest_outside(Gc, i, max_vectors, env)
            minima_sq.append(norm)
            vectors.append(tuple(combine(cols, y)))
            if i < d - 1:
                cols = _rebase(cols, y, i)
                cols = lll_reduce(G, cols=cols, start=i + 1)
        for i in range(1, d):
            prev, cur = minima_sq[i - 1], minima_sq[i]
            if cur >= prev:
                continue
            # the true sequence is nondecreasing; only a tie may come back inverted
            if prev - cur > 2 * env * prev:
                raise PrecisionError(
                    f"lambda_{i + 1}^2 = {cur} below lambda_{i}^2 = {prev} beyond the "
                    f"{bits or 'exact'}-bit envelope; the enumeration radius is not certified"
                )
            minima_sq[i] = prev
    logger.debug(f"minima computed at {bits or 'exact'} bits")
    return MinimaResult(minima_sq=minima_sq, vectors=vectors, reduced=reduced, bits=bits)


def _minima_of(x: Any, max_vectors: int = DEFAULT_MAX_VECTORS) -> MinimaResult:
    return x if isinstance(x, MinimaResult) else successive_minima(x, max_vectors=max_vectors)


def eta(x: Any, i: int) -> Any:
    """eta_i(x) = lambda_i / lambda_{i+1} for 1 <= i <= d-1."""
    return _minima_of(x).eta(i)


def eta_set(x: Any, eps: float) -> List[int]:
    """{i : eta_i(x) < eps}."""
    m = _minima_of(x)
    return [i for i in range(1, m.d) if m.eta_below(i, eps)]
