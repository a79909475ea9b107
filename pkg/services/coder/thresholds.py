# services/coder/thresholds.py

"""
Threshold crossings of t -> eta_l(a_t x) on [-N, N].

|d/dt log lambda_i(a_t x)| <= A = max|alpha_i|, so log eta_l is 2A-Lipschitz.
From a sample at distance `dist` (in log scale) to the nearest level, no level
can be reached before t + dist / (2A); the scan steps by that amount, never by
less than root_tol / (2A). A predicate change between two samples is then
located with bracket_crossing, and the breakpoint is the bracket's hi end.
"""

import logging
import math
from typing import Dict, List, Optional, Tuple

from services.coder.coder_types import ThresholdIntervals, ThresholdScan, TimeInterval
from services.errors import ConfigError
from services.lattice.lattice_types import Lattice, ToleranceConfig
from services.lattice.numeric import bracket_crossing
from services.lattice.trajectory import TrajectoryEvaluator
from services.weyl.weyl_types import DiagonalFlow

# -------------------- Logging --------------------
logger = logging.getLogger("coder.thresholds")
if not logger.handlers:
    _h = logging.StreamHandler()
    _h.setFormatter(logging.Formatter("[%(asctime)s] %(levelname)s: %(message)s"))
    logger.addHandler(_h)
logger.setLevel(logging.INFO)


def _sample_times(ev: TrajectoryEvaluator, N: int, log_levels: List[float], tol: float) -> List[float]:
    A = float(ev.flow.max_abs)
    if A == 0:
        return [float(-N), float(N)]
    floor = tol / (2 * A)
    times = [float(-N)]
    t = float(-N)
    while t < N:
        logs = ev.log_eta(t)
        dist = min(abs(v - L) for v in logs for L in log_levels)
        t = min(float(N), t + max(dist / (2 * A), floor))
        times.append(t)
    return times


def _components(ev: TrajectoryEvaluator, times: List[float], l: int, delta_prime: float,
                tol: float, N: int) -> List[TimeInterval]:
    """Maximal [start, end) on which eta_l < delta'."""
    pred = lambda t: ev.eta_below(t, l, delta_prime)  # noqa: E731
    out: List[TimeInterval] = []
    state = pred(times[0])
    start: Optional[float] = times[0] if state else None
    for a, b in zip(times, times[1:]):
        nxt = pred(b)
        if nxt == state:
            continue
        _, hi = bracket_crossing(pred, a, b, tol)
        if nxt:
            start = hi
        else:
            out.append(TimeInterval(start=start, end=hi, clipped_start=start == -N))
            start = None
        state = nxt
    if start is not None:
        out.append(TimeInterval(start=start, end=float(N), clipped_start=start == -N, clipped_end=True))
    return out


def threshold_intervals(x: Lattice, flow: DiagonalFlow, cfg: ToleranceConfig, N: int,
                        evaluator: Optional[TrajectoryEvaluator] = None) -> ThresholdScan:
    """
    T_{L,l} for every level L = delta^(r^m), m = 0..d, and every l in 1..d-1.

    Each T_{L,l} is the union of the components of {eta_l < delta'} on which
    eta_l dips below L at some sample.
    """
    d = flow.d
    if not abs(cfg.log_delta) < N:
        raise ConfigError(f"need |log delta| < N, got |log delta| = {abs(cfg.log_delta):.4g}, N = {N}")
    try:
        cfg.check_dimension(d)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    ev = evaluator or TrajectoryEvaluator(x, flow, cfg)
    log_levels = cfg.log_levels(d)
    tol = cfg.root_tol

    times = _sample_times(ev, N, log_levels + [cfg.log_delta_prime], tol)
    components: Dict[int, List[TimeInterval]] = {
        l: _components(ev, times, l, cfg.delta_prime, tol, N) for l in range(1, d)
    }

    inside: Dict[Tuple[int, int], List[float]] = {}
    for l, ivs in components.items():
        for k, iv in enumerate(ivs):
            inside[(l, k)] = [iv.start] + [t for t in times if iv.contains(t, closed_end=iv.end == N)]

    levels: List[ThresholdIntervals] = []
    for m, log_level in enumerate(log_levels):
        level = math.exp(log_level)
        per_l: Dict[int, List[TimeInterval]] = {}
        for l, ivs in components.items():
            keep = []
            for k, iv in enumerate(ivs):
                if any(ev.eta_below(t, l, level) for t in inside[(l, k)]):
                    keep.append(iv)
            per_l[l] = keep
        levels.append(ThresholdIntervals(m=m, log_level=log_level, intervals=per_l))

    gap = cfg.log_delta_prime - cfg.log_delta
    unclipped = [iv.length for ivs in levels[0].intervals.values() for iv in ivs if not iv.clipped]
    ratio = min(unclipped) / gap if unclipped else None

    scan = ThresholdScan(N=N, log_delta_prime=cfg.log_delta_prime, levels=levels, components=components,
                         samples=len(times), min_length_ratio=ratio)
    count = sum(len(v) for v in components.values())
    logger.info(f"threshold scan finished: {len(times)} samples, {count} delta'-components, "
                f"{ev.evaluations} minima evaluations")
    return scan
