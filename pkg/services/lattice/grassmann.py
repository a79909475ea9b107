# services/lattice/grassmann.py

"""
Grassmannian distance and orientation dynamics of rational subspaces.

For V with Plücker vector p, ||a_t p||^2 = sum_beta m_beta exp(2 t beta), where beta
runs over the eigenvalues sum(E) of the coordinates e_I, E the exponent multiset of
I, and m_beta is the squared mass of p on the coordinates with that eigenvalue.
V has orientation E at time t when the beta-term beats the rest by the factor
eps0^2 and all of its mass sits on coordinates with multiset E. Distinct multisets
sharing an eigenvalue (e.g. {1, -1} and {0, 0}) form one term; when such a term
dominates with mass on more than one multiset, there is no orientation.
"""

import logging
import math
from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

import mpmath
import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import subspace_angles
from scipy.optimize import brentq, minimize_scalar
from scipy.special import logsumexp

from services.errors import ComputationError, ConfigError, DimensionError
from services.lattice.lattice_types import RationalSubspace, ToleranceConfig
from services.lattice.numeric import bracket_crossing, precision_context, to_mpf
from services.lattice.subspaces import plucker_coordinates
from services.weyl.parabolic import multiset_le
from services.weyl.weyl_types import DiagonalFlow, Multiset, as_multiset, fraction_str

# -------------------- Logging --------------------
logger = logging.getLogger("lattice.grassmann")
if not logger.handlers:
    _h = logging.StreamHandler()
    _h.setFormatter(logging.Formatter("[%(asctime)s] %(levelname)s: %(message)s"))
    logger.addHandler(_h)
logger.setLevel(logging.INFO)


# ---- Distance ----

def _as_columns(V: Any) -> np.ndarray:
    if isinstance(V, RationalSubspace):
        cols = [[float(c) for c in v] for v in V.real_vectors()]
        return np.array(cols, dtype=float).T
    arr = np.asarray(V, dtype=float)
    return arr.reshape(-1, 1) if arr.ndim == 1 else arr


def grassmann_distance(V: Any, W: Any) -> float:
    """
    sup over unit v in V of dist(v, W), i.e. the sine of the largest principal angle.

    V, W are RationalSubspaces or d x l arrays whose columns span the subspaces.
    """
    A, B = _as_columns(V), _as_columns(W)
    if A.shape[0] != B.shape[0]:
        raise DimensionError(f"ambient dimensions differ: {A.shape[0]} vs {B.shape[0]}")
    if np.linalg.matrix_rank(A) != np.linalg.matrix_rank(B):
        raise DimensionError(f"subspace dimensions differ: {np.linalg.matrix_rank(A)} vs {np.linalg.matrix_rank(B)}")
    angles = subspace_angles(A, B)
    return float(min(1.0, max(0.0, np.sin(np.max(angles)))))


@lru_cache(maxsize=64)
def _default_eps0(alpha: Tuple[Any, ...]) -> float:
    d = len(alpha)
    eye = np.eye(d)
    best: Optional[float] = None
    for l in range(1, d):
        subsets = list(combinations(range(d), l))
        for a, I in enumerate(subsets):
            for J in subsets[a + 1:]:
                if sum(alpha[i] for i in I) == sum(alpha[j] for j in J):
                    continue
                dist = grassmann_distance(eye[:, list(I)], eye[:, list(J)])
                best = dist if best is None else min(best, dist)
    return (best if best is not None else 1.0) / 3.0


def default_eps0(flow: DiagonalFlow) -> float:
    """One third of the smallest distance between coordinate subspaces with distinct eigenvalues."""
    return _default_eps0(tuple(flow.alpha))


def resolve_eps0(flow: DiagonalFlow, cfg: ToleranceConfig) -> float:
    return cfg.eps0 if cfg.eps0 is not None else default_eps0(flow)


# ---- Weight profiles ----

class WeightTerm(BaseModel):
    """One eigenvalue of a_t on the exterior power; multiset is None when the mass is spread over several."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    multiset: Optional[Multiset]
    multisets: Tuple[Multiset, ...]
    beta: float
    log_mass: float


class WeightProfile(BaseModel):
    """log-masses of the Plücker vector of V at t = 0, grouped by eigenvalue."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    terms: Tuple[WeightTerm, ...]

    def log_weights(self, t: float) -> np.ndarray:
        return np.array([w.log_mass + 2.0 * t * w.beta for w in self.terms])

    def dominant_index(self, t: float, log_eps_sq: float) -> Optional[int]:
        L = self.log_weights(t)
        k = int(np.argmax(L))
        if len(L) == 1:
            return k
        rest = logsumexp(np.delete(L, k))
        return k if rest < log_eps_sq + L[k] else None

    def dominant(self, t: float, log_eps_sq: float) -> Optional[Multiset]:
        k = self.dominant_index(t, log_eps_sq)
        return self.terms[k].multiset if k is not None else None

    def margin(self, index: int, t: float, log_eps_sq: float) -> float:
        """log(others / own) - log eps^2; negative exactly where the term dominates."""
        L = self.log_weights(t)
        if len(L) == 1:
            return -math.inf
        return float(logsumexp(np.delete(L, index)) - L[index] - log_eps_sq)


def weight_profile(V: RationalSubspace, flow: DiagonalFlow) -> WeightProfile:
    if V.d != flow.d:
        raise DimensionError(f"subspace has d={V.d}, flow has d={flow.d}")
    lat = V.lattice
    with precision_context(0 if lat.exact else lat.precision + 32):
        p = plucker_coordinates(V.real_vectors())
        masses: Dict[Fraction, Any] = {}
        carriers: Dict[Fraction, Set[Multiset]] = {}
        for I, value in p.items():
            if value == 0:
                continue
            E = as_multiset(flow.alpha[i] for i in I)
            beta = sum(E, Fraction(0))
            masses[beta] = masses.get(beta, 0) + value * value
            carriers.setdefault(beta, set()).add(E)
        if not masses:
            raise ComputationError("subspace has a zero Plücker vector")
        terms = []
        for beta in sorted(masses):
            Es = tuple(sorted(carriers[beta]))
            terms.append(WeightTerm(multiset=Es[0] if len(Es) == 1 else None, multisets=Es,
                                    beta=float(beta), log_mass=float(mpmath.log(to_mpf(masses[beta])))))
    return WeightProfile(terms=tuple(terms))
    return WeightProfile(terms=terms)


def orientation_of_subspace(V: RationalSubspace, flow: DiagonalFlow, cfg: ToleranceConfig,
                            t: float = 0.0, profile: Optional[WeightProfile] = None) -> Optional[Multiset]:
    """The dominant exponent multiset of a_t V, or None when no term dominates by eps0^2."""
    profile = profile or weight_profile(V, flow)
    eps = resolve_eps0(flow, cfg)
    return profile.dominant(t, 2.0 * math.log(eps))


# ---- Dominance intervals ----

class DominanceInterval(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    multiset: Multiset
    start: float
    end: float
    clipped_start: bool = False
    clipped_end: bool = False

    def to_json(self) -> Dict[str, Any]:
        return {
            "E": [fraction_str(v) for v in self.multiset],
            "start": self.start,
            "end": self.end,
            "clipped": [self.clipped_start, self.clipped_end],
        }


class GrassmannIntervals(BaseModel):
    intervals: List[DominanceInterval] = Field(default_factory=list)
    window: Tuple[float, float]
    gap_length: float
    increasing: bool = True


def grassmann_intervals(V: RationalSubspace, flow: DiagonalFlow, cfg: ToleranceConfig,
                        window: Sequence[float], profile: Optional[WeightProfile] = None) -> GrassmannIntervals:
    """
    Maximal intervals of the window on which one multiset dominates. A dominant
    eigenvalue shared by several multisets yields no interval and counts towards
    gap_length.

    Each margin is a log-sum-exp of affine functions minus an affine function,
    hence convex, so every dominance set is one interval. Edges are located with
    brentq and then certified as brackets lo < edge <= hi with the shared
    predicate; the reported edge is hi.
    """
    t_min, t_max = float(window[0]), float(window[1])
    if not t_min < t_max:
        raise ConfigError(f"degenerate window [{t_min}, {t_max}]")
    profile = profile or weight_profile(V, flow)
    log_eps_sq = 2.0 * math.log(resolve_eps0(flow, cfg))
    tol = cfg.root_tol

    out: List[DominanceInterval] = []
    for k, term in enumerate(profile.terms):
        f = lambda t, k=k: profile.margin(k, t, log_eps_sq)  # noqa: E731
        pred = lambda t, k=k: profile.dominant_index(t, log_eps_sq) == k  # noqa: E731
        if f(t_min) < 0 and f(t_max) < 0:
            t_star = t_min
        else:
            res = minimize_scalar(f, bounds=(t_min, t_max), method="bounded", options={"xatol": tol})
            t_star = float(res.x)
            for cand in (t_min, t_max):
                if f(cand) < f(t_star):
                    t_star = cand
        if not pred(t_star):
            continue
        if term.multiset is None:
            logger.info(f"eigenvalue {term.beta:g} dominates near t={t_star:.6g} with mass on {len(term.multisets)} "
                        f"multisets; no orientation there")
            continue
        start, clipped_start = t_min, True
        if not pred(t_min):
            start = _edge(f, pred, t_min, t_star, tol)
            clipped_start = False
        end, clipped_end = t_max, True
        if not pred(t_max):
            end = _edge(f, pred, t_star, t_max, tol)
            clipped_end = False
        out.append(DominanceInterval(multiset=term.multiset, start=start, end=end,
                                     clipped_start=clipped_start, clipped_end=clipped_end))

    out.sort(key=lambda iv: iv.start)
    increasing = all(multiset_le(a.multiset, b.multiset) and a.multiset != b.multiset
                     for a, b in zip(out, out[1:]))
    if not increasing:
        logger.warning(f"dominance sequence is not increasing: {[iv.multiset for iv in out]}")
    covered = sum(iv.end - iv.start for iv in out)
    return GrassmannIntervals(intervals=out, window=(t_min, t_max), gap_length=(t_max - t_min) - covered,
                              increasing=increasing)


def _edge(f, pred, lo: float, hi: float, tol: float) -> float:
    """Bracket hi of the single predicate change in [lo, hi]."""
    try:
        root = brentq(f, lo, hi, xtol=tol / 4)
        a, b = max(lo, root - tol), min(hi, root + tol)
        if pred(a) != pred(b):
            lo, hi = a, b
    except ValueError:
        pass
    return bracket_crossing(pred, lo, hi, tol)[1]
