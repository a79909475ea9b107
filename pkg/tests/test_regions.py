# tests/test_regions.py

import math
from fractions import Fraction

import mpmath
import pytest

from services.errors import ComputationError, RegionExitError
from services.lattice.flag_basis import flag_basis
from services.lattice.lattice_types import Lattice, LatticeSnapshot, ToleranceConfig
from services.lattice.regions import (
    block_average,
    classify,
    covol_evolution_check,
    crude_covol_check,
    err,
    height,
    minima_evolution_check,
)
from services.lattice.trajectory import TrajectoryEvaluator
from services.lattice.witness import block_exponents, cusp_witness
from services.orchestrator.config import DEFAULT_DELTA
from services.orchestrator.flow import run_coding_pipeline
from services.weyl.weyl_types import DiagonalFlow, Orientation, ParabolicSubgroup
from tests.factories import shear_lattice

F = Fraction


@pytest.fixture
def schedule3() -> ToleranceConfig:
    return ToleranceConfig.schedule(DEFAULT_DELTA, 3)


@pytest.fixture
def collapsed() -> ToleranceConfig:
    """delta = delta' = 1/2; only meaningful with the relaxed ordering."""
    return ToleranceConfig(delta=0.5, delta_prime=0.5, eta0=0.6, strict=False)


# ---- Classification ----

def test_identity_is_in_the_compact_part(flow3, schedule3):
    c = classify(Lattice.identity(3), flow3, schedule3)
    assert c.P.is_G and c.Q.is_G
    assert c.compact
    assert c.orientation == Orientation.trivial(flow3)
    assert c.height == pytest.approx([0.0, 0.0, 0.0], abs=1e-12)


def test_diagonal_deep_in_the_borel_region(flow3, collapsed):
    x = Lattice.diagonal([F(1, 4), F(1), F(4)])
    c = classify(x, flow3, collapsed)
    assert c.P.is_B and c.Q.is_B
    assert c.orientation.multiset_flag == ((F(1, 2),), (F(1, 2), F(1, 2)))
    assert sorted(c.subspaces) == [1, 2]
    doc = c.to_json()
    assert doc["P"] == [1, 2]
    assert doc["orientation"]["rep"] == [1, 2, 3]


def test_orientation_none_without_dominance(flow3):
    # shortest vector e1 + e3 has equal mass on the 1/2 and -1 eigenlines
    cfg = ToleranceConfig(delta=0.01, delta_prime=0.2, eta0=0.5)
    cols = [[F(1, 16), F(0), F(1, 16)], [F(0), F(16), F(0)], [F(0), F(0), F(1)]]
    x = Lattice(d=3, columns=cols)
    c = classify(x, flow3, cfg)
    assert 1 in c.Q.jumps
    assert c.orientation is None
    assert c.notes


def test_witness_enters_the_cusp(flow3, schedule3):
    P = ParabolicSubgroup(d=3, jumps=[1])
    x = cusp_witness(P, 8)
    c = classify(x, flow3, schedule3)
    assert 1 in c.Q.jumps
    assert c.P.is_G
    assert c.orientation.multiset_flag == ((F(1, 2),),)


@pytest.mark.parametrize("n", [2, 5, 9])
def test_region_ordering(flow3, schedule3, n):
    x = cusp_witness(ParabolicSubgroup.B(3), n)
    c = classify(x, flow3, schedule3)
    assert set(c.P.jumps) <= set(c.Q.jumps)


# ---- Witnesses ----

def test_witness_examples():
    assert block_exponents(ParabolicSubgroup.B(2)) == [F(-1), F(1)]
    assert block_exponents(ParabolicSubgroup(d=3, jumps=[1])) == [F(-1), F(1, 2)]
    assert cusp_witness(ParabolicSubgroup.B(2), 4) == Lattice.diagonal([F(1, 4), F(4)])
    exact = cusp_witness(ParabolicSubgroup(d=3, jumps=[1]), 4)
    assert exact.exact and exact.columns[1][1] == 2
    real = cusp_witness(ParabolicSubgroup(d=3, jumps=[1]), 3)
    assert not real.exact
    assert float(real.columns[0][0]) == pytest.approx(1 / 3)
    assert float(real.columns[1][1]) == pytest.approx(math.sqrt(3))


def test_witness_rejects_G():
    with pytest.raises(ValueError):
        cusp_witness(ParabolicSubgroup.G(3), 4)


# ---- Height and err ----

def test_height_and_err():
    x = Lattice.diagonal([F(1, 4), F(1), F(4)])
    h = height(x)
    assert h == pytest.approx([math.log(4), 0.0, -math.log(4)])
    assert err(x, ParabolicSubgroup.B(3)) == pytest.approx(0.0, abs=1e-12)
    assert err(x, ParabolicSubgroup.G(3)) == pytest.approx(math.sqrt(2) * math.log(4))
    assert block_average(ParabolicSubgroup(d=3, jumps=[1]), [3.0, 1.0, -1.0]) == [3.0, 0.0, 0.0]


# ---- Evolution along the flow ----

def test_covolume_evolution_on_eigenvectors(flow2):
    cfg = ToleranceConfig(delta=0.2, delta_prime=0.2, eta0=0.5, strict=False)
    x = Lattice.diagonal([F(1, 4), F(4)])
    B = ParabolicSubgroup.B(2)
    w = Orientation.from_permutation(flow2, B, [0, 1])
    assert covol_evolution_check(x, flow2, cfg, (0.0, 1.0), B, w) == pytest.approx(0.0, abs=1e-12)
    assert covol_evolution_check(x, flow2, cfg, (0.0, 0.0), B, w) == 0.0


def test_covolume_evolution_reports_region_exit(flow2):
    cfg = ToleranceConfig(delta=0.2, delta_prime=0.2, eta0=0.5, strict=False)
    x = Lattice.diagonal([F(1, 4), F(4)])
    B = ParabolicSubgroup.B(2)
    w = Orientation.from_permutation(flow2, B, [0, 1])
    with pytest.raises(RegionExitError) as info:
        covol_evolution_check(x, flow2, cfg, (0.0, 3.0), B, w)
    # eta_1(a_t x) = e^t / 16 reaches 0.2 at t = log 3.2
    assert info.value.exit_time > math.log(3.2)


def _coded_cusp_trajectories():
    P1_2, P1_3, P2_3 = (ParabolicSubgroup(d=2, jumps=(1,)), ParabolicSubgroup(d=3, jumps=(1,)),
                        ParabolicSubgroup(d=3, jumps=(2,)))
    for alpha in (["1/2", "-1/2"], ["1", "-1"]):
        for n in (2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 16):
            yield cusp_witness(P1_2, n), DiagonalFlow.of(alpha)
    for n in (2, 3):
        yield cusp_witness(P1_2, n), DiagonalFlow.of(["1/3", "-1/3"])
    for P in (P1_3, P2_3):
        yield cusp_witness(P, 3), DiagonalFlow.of(["1/2", "1/2", "-1"])


@pytest.mark.slow
def test_covolumes_follow_the_flow_on_coded_cusp_intervals(covol_envelope):
    n_max = 20
    checked = 0
    for x, flow in _coded_cusp_trajectories():
        cfg = ToleranceConfig.schedule(math.exp(-9), flow.d)
        ev = TrajectoryEvaluator(x, flow, cfg)
        for piece in run_coding_pipeline(x, flow, cfg, n_max)["partition"].refined:
            if piece.par.is_G or piece.weyl is None:
                continue
            times = [n for n in range(math.ceil(piece.start), math.floor(piece.end) + 1)
                     if all(ev.minima(n).eta_below(l, cfg.delta) for l in piece.par.jumps)]
            assert times, (x, flow, piece)
            # eta_l is monotone on these pieces, so the times below delta are consecutive
            assert times == list(range(times[0], times[-1] + 1))
            deviation = covol_evolution_check(x, flow, cfg, (times[0], times[-1]), piece.par, piece.weyl, step=0.5)
            assert deviation <= covol_envelope
            checked += 1
    assert checked >= 50

@pytest.mark.parametrize("seed", range(3))
def test_minima_and_covolumes_move_at_bounded_speed(flow3, seed):
    x = shear_lattice(3, seed)
    for t in (-2.0, 0.75, 3.0):
        assert minima_evolution_check(x, flow3, t)
        for l in (1, 2):
            assert crude_covol_check(x, flow3, t, l)


# ---- Flag bases ----

def test_flag_basis_standard_flag(flow2):
    cfg = ToleranceConfig.schedule(DEFAULT_DELTA, 2)
    x = Lattice.diagonal([F(1, 16), F(16)])
    fb = flag_basis(x, ParabolicSubgroup.B(2), flow2, cfg)
    assert fb.orientation.rep == (0, 1)
    for i in range(2):
        for j in range(2):
            assert float(fb.O[i][j]) == pytest.approx(float(i == j), abs=1e-20)
            assert float(fb.u[i][j]) == pytest.approx(float(i == j), abs=1e-20)


def test_flag_basis_single_elimination(flow2):
    cfg = ToleranceConfig.schedule(DEFAULT_DELTA, 2)
    # V_1 = span{e1 + 10^-2 e2}
    x = Lattice(d=2, columns=[[F(1, 16), F(1, 1600)], [F(0), F(16)]])
    fb = flag_basis(x, ParabolicSubgroup.B(2), flow2, cfg)
    assert float(fb.u[1][0]) == pytest.approx(0.01, rel=1e-12)
    assert float(fb.u[0][1]) == pytest.approx(0.0, abs=1e-20)
    # the first output column spans V_1
    col = [fb.columns[0][0], fb.columns[1][0]]
    assert float(col[1] / col[0]) == pytest.approx(0.01, rel=1e-12)
    doc = fb.to_json()
    assert doc["w"] == [1, 2]


def test_flag_basis_after_flowing(flow3):
    cfg = ToleranceConfig.schedule(DEFAULT_DELTA, 3)
    x = Lattice.diagonal([F(1, 16), F(4), F(4)])
    snap = LatticeSnapshot(base=x, flow=flow3, t=0.5)
    fb = flag_basis(snap, ParabolicSubgroup(d=3, jumps=[1]), flow3, cfg)
    with mpmath.workprec(128):
        det = mpmath.det(mpmath.matrix(fb.O))
    assert float(det) == pytest.approx(1.0)


def test_flag_basis_needs_an_orientation(flow3):
    cfg = ToleranceConfig.schedule(DEFAULT_DELTA, 3)
    with pytest.raises(ComputationError):
        flag_basis(Lattice.identity(3), ParabolicSubgroup.B(3), flow3, cfg)
