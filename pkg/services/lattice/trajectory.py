# services/lattice/trajectory.py

import logging
from typing import Dict, List, Optional

from services.lattice.lattice_types import (
    Classification,
    Lattice,
    LatticeSnapshot,
    MinimaResult,
    ToleranceConfig,
)
from services.lattice.minima import successive_minima
from services.lattice.regions import classify
from services.weyl.weyl_types import DiagonalFlow

# -------------------- Logging --------------------
logger = logging.getLogger("lattice.trajectory")
if not logger.handlers:
    _h = logging.StreamHandler()
    _h.setFormatter(logging.Formatter("[%(asctime)s] %(levelname)s: %(message)s"))
    logger.addHandler(_h)
logger.setLevel(logging.INFO)


class TrajectoryEvaluator:
    """
    Geometry of a_t x along one trajectory.

    Minima are cached by time; each new time is reduced starting from the LLL
    basis of the nearest cached time, which is already close to reduced.
    """

    def __init__(self, x: Lattice, flow: DiagonalFlow, cfg: ToleranceConfig):
        if x.d != flow.d:
            raise ValueError(f"lattice has d={x.d}, flow has d={flow.d}")
        self.x = x
        self.flow = flow
        self.cfg = cfg
        self._minima: Dict[float, MinimaResult] = {}
        self._classes: Dict[float, Classification] = {}
        self.evaluations = 0

    @property
    def d(self) -> int:
        return self.flow.d

    def snapshot(self, t: float) -> LatticeSnapshot:
        return LatticeSnapshot(base=self.x, flow=self.flow, t=float(t), precision=self.cfg.precision)

    def _hint(self, t: float) -> Optional[List[List[int]]]:
        if not self._minima:
            return None
        nearest = min(self._minima, key=lambda s: abs(s - t))
        return self._minima[nearest].reduced or None

    def minima(self, t: float) -> MinimaResult:
        t = float(t)
        cached = self._minima.get(t)
        if cached is None:
            cached = successive_minima(self.snapshot(t), hint=self._hint(t), max_vectors=self.cfg.max_vectors)
            self._minima[t] = cached
            self.evaluations += 1
        return cached

    def log_eta(self, t: float) -> List[float]:
        return self.minima(t).log_eta()

    def log_eta_l(self, t: float, l: int) -> float:
        return self.minima(t).log_eta()[l - 1]

    def eta_below(self, t: float, l: int, level: float) -> bool:
        return self.minima(t).eta_below(l, level)

    def classify(self, t: float) -> Classification:
        t = float(t)
        cached = self._classes.get(t)
        if cached is None:
            cached = classify(self.snapshot(t), self.flow, self.cfg, minima=self.minima(t))
            self._classes[t] = cached
        return cached
