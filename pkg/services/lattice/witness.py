# services/lattice/witness.py

import logging
from fractions import Fraction
from typing import Any, List, Optional

import mpmath

from services.errors import ConfigError
from services.lattice.lattice_types import DEFAULT_PRECISION, Lattice
from services.weyl.weyl_types import ParabolicSubgroup, fraction_str

# -------------------- Logging --------------------
logger = logging.getLogger("lattice.witness")
if not logger.handlers:
    _h = logging.StreamHandler()
    _h.setFormatter(logging.Formatter("[%(asctime)s] %(levelname)s: %(message)s"))
    logger.addHandler(_h)
logger.setLevel(logging.INFO)


def block_exponents(P: ParabolicSubgroup) -> List[Fraction]:
    """
    Exponent e_m with z_m = n^{e_m} for each block of P: -(k+1-m) for the first k
    blocks, and the last block balances the determinant.
    """
    k = len(P.jumps)
    bounds = P.bounds
    exps = [Fraction(-(k + 1 - m)) for m in range(1, k + 1)]
    weight = sum((k + 1 - s) * (bounds[s] - bounds[s - 1]) for s in range(1, k + 1))
    exps.append(Fraction(weight, P.d - bounds[k]))
    return exps


def _exact_power(n: int, e: Fraction) -> Optional[Fraction]:
    """n^e when it is rational."""
    q = e.denominator
    root = round(n ** (1.0 / q))
    for cand in (root - 1, root, root + 1):
        if cand > 0 and cand ** q == n:
            base = Fraction(cand)
            return base ** e.numerator
    return None


def cusp_witness(P: ParabolicSubgroup, n: int, precision: int = DEFAULT_PRECISION) -> Lattice:
    """
    [h_n] with h_n = diag(z_1 I, ..., z_{k+1} I) over the blocks of P.

    For large n the first k blocks carry minima separated by factors of n at each
    jump of P, so classify places the lattice in N_delta(P).
    """
    if P.is_G:
        raise ConfigError("cusp witnesses need a proper parabolic, got G")
    if n < 2:
        raise ConfigError(f"cusp witnesses need n >= 2, got {n}")
    entries: List[Any] = []
    exact = True
    for size, e in zip(P.block_sizes, block_exponents(P)):
        value = _exact_power(n, e)
        if value is None:
            exact = False
            with mpmath.workprec(precision + 32):
                value = mpmath.power(n, mpmath.mpf(e.numerator) / e.denominator)
        entries.extend([value] * size)
    if not exact:
        with mpmath.workprec(precision + 32):
            entries = [mpmath.mpf(v.numerator) / v.denominator if isinstance(v, Fraction) else v for v in entries]
    exps = ", ".join(fraction_str(e) for e in block_exponents(P))
    logger.info(f"cusp witness for {P.name}, n={n}: block exponents ({exps}), exact={exact}")
    return Lattice.diagonal(entries, exact=exact, precision=precision)
