# services/lattice/regions.py

import logging
import math
from collections import Counter
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from services.errors import RegionExitError, UniquenessError
from services.lattice.grassmann import orientation_of_subspace, weight_profile
from services.lattice.lattice_types import (
    Classification,
    Lattice,
    LatticeSnapshot,
    MinimaResult,
    RationalSubspace,
    ToleranceConfig,
    time_of,
)
from services.lattice.minima import successive_minima
from services.lattice.subspaces import covolume_squared, min_covolume_sq, unique_small_subspace
from services.lattice.numeric import log as mp_log
from services.weyl.weyl_types import DiagonalFlow, Multiset, Orientation, ParabolicSubgroup

# -------------------- Logging --------------------
logger = logging.getLogger("lattice.regions")
if not logger.handlers:
    _h = logging.StreamHandler()
    _h.setFormatter(logging.Formatter("[%(asctime)s] %(levelname)s: %(message)s"))
    logger.addHandler(_h)
logger.setLevel(logging.INFO)

LatticeLike = Union[Lattice, LatticeSnapshot]


# ---- Heights ----

def _minima(x: Any, cfg: Optional[ToleranceConfig] = None) -> MinimaResult:
    if isinstance(x, MinimaResult):
        return x
    if isinstance(x, Classification):
        raise TypeError("pass the lattice, not a classification")
    return successive_minima(x, max_vectors=cfg.max_vectors if cfg else 200000)


def height(x: Any) -> List[float]:
    """(-log lambda_1, ..., -log lambda_d)."""
    if isinstance(x, Classification):
        return list(x.height)
    return [-v for v in _minima(x).log_minima()]


def block_average(P: ParabolicSubgroup, vec: Sequence[float]) -> List[float]:
    out: List[float] = []
    for blk in P.blocks:
        mean = sum(vec[i] for i in blk) / len(blk)
        out.extend([mean] * len(blk))
    return out


def err(x: Any, P: ParabolicSubgroup) -> float:
    """||height(x) - pi_P(height(x))||."""
    h = height(x)
    if len(h) != P.d:
        raise ValueError(f"lattice has d={len(h)}, parabolic has d={P.d}")
    return float(np.linalg.norm(np.array(h) - np.array(block_average(P, h))))


# ---- Classification ----

def nested_flags(flags: List[Multiset]) -> bool:
    for a, b in zip(flags, flags[1:]):
        if Counter(a) - Counter(b):
            return False
    return True


def orientation_for(x: LatticeLike, flow: DiagonalFlow, cfg: ToleranceConfig, P: ParabolicSubgroup,
                    minima: Optional[MinimaResult] = None,
                    subspaces: Optional[Dict[int, RationalSubspace]] = None) -> Tuple[Optional[Orientation], List[str]]:
    """[w]_P of x from the flag {V_l}_{l in eta(P)}, or None with the reasons."""
    if P.is_G:
        return Orientation.trivial(flow), []
    m = minima or _minima(x, cfg)
    subspaces = subspaces if subspaces is not None else {}
    notes: List[str] = []
    flags: List[Multiset] = []
    t = time_of(x)
    for l in P.jumps:
        V = subspaces.get(l)
        if V is None:
            try:
                V = unique_small_subspace(x, l, cfg, minima=m)
            except UniquenessError as e:
                notes.append(f"l={l}: {e}")
                return None, notes
            subspaces[l] = V
        E = orientation_of_subspace(V, flow, cfg, t=t, profile=weight_profile(V, flow))
        if E is None:
            notes.append(f"l={l}: no dominant weight group at t={t}")
            return None, notes
        flags.append(E)
    if not nested_flags(flags):
        notes.append(f"dominant multisets {flags} are not nested")
        return None, notes
    return Orientation.from_multiset_flag(flow, P, flags), notes


def classify(x: LatticeLike, flow: DiagonalFlow, cfg: ToleranceConfig,
             minima: Optional[MinimaResult] = None) -> Classification:
    """
    P from eta(x, delta), Q from eta(x, delta'), and [w]_Q when every flag
    subspace V_l (l in eta(Q)) is unique and has a dominant weight group.
    """
    m = minima or _minima(x, cfg)
    d = flow.d
    P = ParabolicSubgroup(d=d, jumps=[l for l in range(1, d) if m.eta_below(l, cfg.delta)])
    Q = ParabolicSubgroup(d=d, jumps=[l for l in range(1, d) if m.eta_below(l, cfg.delta_prime)])
    subspaces: Dict[int, RationalSubspace] = {}
    orientation, notes = orientation_for(x, flow, cfg, Q, minima=m, subspaces=subspaces)
    if notes:
        logger.debug(f"orientation demoted at t={time_of(x)}: {'; '.join(notes)}")
    logs = m.log_minima()
    log_eta = m.log_eta()
    return Classification(
        t=time_of(x),
        P=P,
        Q=Q,
        orientation=orientation,
        minima=[math.exp(v) for v in logs],
        eta=[math.exp(v) for v in log_eta],
        log_eta=log_eta,
        height=[-v for v in logs],
        subspaces=subspaces,
        notes=notes,
    )


# ---- Evolution checks ----

def _grid(t0: float, t1: float, step: float) -> List[float]:
    n = max(1, int(math.ceil((t1 - t0) / step)))
    return [t0 + (t1 - t0) * k / n for k in range(n + 1)]


def _log_covol(x: LatticeLike, V: RationalSubspace) -> float:
    return float(mp_log(covolume_squared(x, V))) / 2


def covol_evolution_check(x: Lattice, flow: DiagonalFlow, cfg: ToleranceConfig, interval: Sequence[float],
                          P: ParabolicSubgroup, w: Orientation, step: float = 0.25) -> float:
    """
    max over sampled t of |log alpha_l(a_t x) - log alpha_l(a_t0 x) - (t - t0) sum_{i<=l} alpha_w(i)|
    over l in eta(P), after checking a_t x stays in N+_delta(P, [w]_P) at every sample.
    """
    t0, t1 = float(interval[0]), float(interval[1])
    a_w = w.permuted_alpha(flow)
    ref: Dict[int, float] = {}
    worst = 0.0
    for t in _grid(t0, t1, step):
        snap = LatticeSnapshot(base=x, flow=flow, t=t, precision=cfg.precision)
        m = successive_minima(snap, max_vectors=cfg.max_vectors)
        missing = [l for l in P.jumps if not m.eta_below(l, cfg.delta)]
        if missing:
            raise RegionExitError(f"eta_{missing[0]} rose above delta at t={t:.6g}", exit_time=t)
        subspaces: Dict[int, RationalSubspace] = {}
        orientation, notes = orientation_for(snap, flow, cfg, P, minima=m, subspaces=subspaces)
        if orientation is None or orientation.rep != w.rep:
            found = orientation.label() if orientation else "none"
            raise RegionExitError(f"orientation changed to {found} at t={t:.6g}", exit_time=t)
        for l in P.jumps:
            value = _log_covol(snap, subspaces[l])
            slope = float(sum(a_w[:l]))
            if l not in ref:
                ref[l] = value - (t - t0) * slope
            worst = max(worst, abs(value - ref[l] - (t - t0) * slope))
    logger.info(f"covolume evolution on [{t0}, {t1}] for {w.label()}: max deviation {worst:.3g}")
    return worst


def minima_evolution_check(x: Lattice, flow: DiagonalFlow, t: float, precision: int = 128) -> bool:
    """|log lambda_i(a_t x) - log lambda_i(x)| <= max|alpha| |t| for every i."""
    before = successive_minima(x).log_minima()
    after = successive_minima(LatticeSnapshot(base=x, flow=flow, t=t, precision=precision)).log_minima()
    bound = float(flow.max_abs) * abs(t) + 1e-12
    return all(abs(a - b) <= bound for a, b in zip(after, before))


def crude_covol_check(x: Lattice, flow: DiagonalFlow, t: float, l: int, precision: int = 128) -> bool:
    """|log alpha_l(a_t x) - log alpha_l(x)| <= (sum alpha^+) |t|."""
    before, _, _ = min_covolume_sq(x, l)
    after, _, _ = min_covolume_sq(LatticeSnapshot(base=x, flow=flow, t=t, precision=precision), l)
    drift = abs(float(mp_log(after)) - float(mp_log(before))) / 2
    return drift <= float(flow.positive_part) * abs(t) + 1e-12
