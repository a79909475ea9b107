# tests/test_coder.py

import math
import random
from fractions import Fraction

import pytest

from services.coder.budgets import (
    PINNED_CONSTANTS_PATH,
    all_orientations,
    chi_aggregate_check,
    empirical_bound_from_counts,
    entropy_chi,
    error_terms,
    load_covol_envelope,
    load_pinned_constants,
)
from services.coder.coder_types import Coding
from services.coder.coding import (
    coding,
    continuous_occupancy,
    discrete_occupancy,
    region_counts,
    reverse_coding,
    time_series,
)
from services.coder.thresholds import threshold_intervals
from services.errors import ConfigError
from services.lattice.lattice_types import Lattice, ToleranceConfig
from services.lattice.witness import cusp_witness
from services.orchestrator.flow import budget_document, coding_document, run_coding_pipeline
from services.weyl.weyl_types import DiagonalFlow, LinearFunctional, ParabolicSubgroup

F = Fraction
N = 100


@pytest.fixture(scope="module")
def z2_run():
    """a_t Z^2 for t in [-100, 100]: eta_1 = e^-|t|, so the cusp is visited on both ends."""
    flow = DiagonalFlow.of(["1/2", "-1/2"])
    cfg = ToleranceConfig(delta=math.exp(-16), delta_prime=math.exp(-7), r=0.9)
    phi = LinearFunctional.from_roots(2, {1: "1/2"})
    result = run_coding_pipeline(Lattice.identity(2), flow, cfg, N, phi=phi)
    return flow, cfg, result


# ---- Thresholds and the partition ----

def test_threshold_components(z2_run):
    _, _, result = z2_run
    left, right = result["scan"].components[1]
    assert left.start == -N and left.clipped_start
    assert left.end == pytest.approx(-7, abs=1e-6)
    assert right.start == pytest.approx(7, abs=1e-6)
    assert right.end == N and right.clipped_end
    # both components reach delta = e^-16
    assert len(result["scan"].levels[0].intervals[1]) == 2


def test_partition_pieces(z2_run):
    _, _, result = z2_run
    pieces = result["partition"].pieces
    assert [p.par.name for p in pieces] == ["B", "G", "B"]
    assert all(p.deg == 1 for p in pieces)
    assert pieces[1].start == pytest.approx(-7, abs=1e-6)
    assert pieces[1].end == pytest.approx(7, abs=1e-6)


def test_refinement_orients_each_end(z2_run):
    _, _, result = z2_run
    refined = result["partition"].refined
    assert [(p.par.name, p.weyl.rep) for p in refined] == [("B", (0, 1)), ("G", (0, 1)), ("B", (1, 0))]
    assert [p.parent for p in refined] == [0, 1, 2]


# ---- Coding ----

def test_coding_values(z2_run):
    _, _, result = z2_run
    code = result["coding"]
    assert code.key(-50) == ((1,), (0, 1))
    assert code.key(0) == ((), (0, 1))
    assert code.key(50) == ((1,), (1, 0))
    assert code.key(N) == ((1,), (1, 0))
    with pytest.raises(ValueError):
        code(N + 1)


def test_coding_runs_round_trip(z2_run):
    flow, _, result = z2_run
    code = result["coding"]
    rows = code.to_json()
    assert len(rows) == 3
    assert rows[0]["start"] == -N and rows[-1]["end"] == N
    assert rows[-1]["w"] == [2, 1]
    again = Coding.from_json(rows, flow)
    assert [again.key(n) for n in range(-N, N + 1)] == [code.key(n) for n in range(-N, N + 1)]


def test_occupancies(z2_run):
    _, _, result = z2_run
    discrete = discrete_occupancy(result["coding"])
    assert sum(discrete.lengths.values()) == 2 * N + 1
    continuous = continuous_occupancy(result["partition"])
    assert sum(continuous.lengths.values()) == pytest.approx(2 * N)
    assert continuous.lengths[((), (0, 1))] == pytest.approx(14, abs=1e-6)


def test_pointwise_consistency_only_at_threshold_times(z2_run):
    _, _, result = z2_run
    # eta_1(a_n x) = e^-7 exactly at n = +-7
    assert all(abs(b["n"]) == 7 for b in result["consistency"])
    classes = result["classifications"]
    assert len(classes) == 2 * N + 1
    assert classes[N].compact
    assert classes[0].P.is_B and classes[0].orientation.rep == (0, 1)


def test_reverse_coding_matches_reversed_flow():
    flow = DiagonalFlow.of(["1/2", "-1/2"])
    # delta' = e^-7.5 keeps every integer time off the threshold
    cfg = ToleranceConfig(delta=math.exp(-16), delta_prime=math.exp(-7.5), r=0.9)
    x = Lattice.identity(2)
    n_max = 40
    forward = coding(x, flow, cfg, n_max)
    backward = coding(x, flow.scaled(-1), cfg, n_max)
    reversed_code = reverse_coding(forward)
    assert reversed_code.flow == backward.flow
    assert [reversed_code.key(n) for n in range(-n_max, n_max + 1)] == \
        [backward.key(n) for n in range(-n_max, n_max + 1)]


def test_window_must_exceed_log_delta(flow2, z2_tolerance):
    with pytest.raises(ConfigError):
        threshold_intervals(Lattice.identity(2), flow2, z2_tolerance, 10)


def test_r_must_suit_the_dimension(flow2):
    cfg = ToleranceConfig(delta=math.exp(-16), delta_prime=math.exp(-7), r=0.5)
    with pytest.raises(ConfigError):
        threshold_intervals(Lattice.identity(2), flow2, cfg, N)


# ---- Budgets and bounds ----

def test_budgets_within_pinned_constants(z2_run, pinned_constants):
    _, _, result = z2_run
    budgets = result["budgets"]
    assert budgets.ratio_count == pytest.approx(3 * 0.9 * 16 / N)
    # err vanishes on B; the G interval pays |height| = 7/sqrt(2) at each end
    assert budgets.ratio_err == pytest.approx(2 * 7 / math.sqrt(2) / (0.9 * N), rel=1e-3)
    assert budgets.ratio_height < 0.05
    assert budgets.ratio_unoriented == 0
    assert budgets.window_clipped
    assert not budgets.small_n
    assert all(budgets.passed.values())
    assert set(budgets.passed) == set(pinned_constants)


def test_pinned_constants_override(tmp_path, monkeypatch):
    path = tmp_path / "constants.json"
    path.write_text('{"budgets": {"count": 1, "err": 2, "height": 3, "unoriented": 4}}', encoding="utf-8")
    monkeypatch.setenv("CUSPLAB_CONSTANTS", str(path))
    assert load_pinned_constants() == {"count": 1.0, "err": 2.0, "height": 3.0, "unoriented": 4.0}
    with pytest.raises(ConfigError):
        load_covol_envelope()
    assert load_covol_envelope(PINNED_CONSTANTS_PATH) == 0.5


def test_entropy_aggregation_holds(z2_run):
    flow, _, result = z2_run
    counts = region_counts(result["classifications"])
    assert chi_aggregate_check(result["coding"], counts, entropy_chi(flow))
    assert result["chi"]["holds"] is True


def test_negative_chi_rejected(z2_run):
    _, _, result = z2_run
    counts = region_counts(result["classifications"])
    with pytest.raises(ConfigError):
        chi_aggregate_check(result["coding"], counts, lambda H, w: F(-1))


def test_empirical_bound(z2_run):
    flow, cfg, result = z2_run
    bound = result["empirical"]
    # deep in the cusp h_phi = 1/2; everywhere else the max form charges h(G) = 1
    assert F(1, 2) < bound.value < 1
    assert bound.max_h_phi == 1
    assert bound.unoriented_frequency == 0
    assert sum(rc.count for rc in bound.regions) == 2 * N + 1
    deep = [rc for rc in bound.regions if rc.P.is_B]
    assert deep and all(rc.value == F(1, 2) for rc in deep)
    again = empirical_bound_from_counts(region_counts(result["classifications"]), flow, cfg, result["phi"])
    assert again.value == bound.value


def test_error_terms(flow2, z2_tolerance):
    terms = error_terms(flow2, z2_tolerance, LinearFunctional.zero(2))
    s = 0.9 * 16
    assert terms["f"] == pytest.approx(math.log(s) / s)
    assert terms["inv_log_delta_prime"] == pytest.approx(1 / 7)


# ---- Documents ----

def test_time_series(z2_run):
    _, _, result = z2_run
    df = time_series(result["classifications"])
    assert len(df) == 2 * N + 1
    assert {"t", "lambda_1", "lambda_2", "eta_1", "P", "Q", "orientation"} <= set(df.columns)
    assert df.loc[df["t"] == 0, "eta_1"].iloc[0] == pytest.approx(1.0)


def test_documents(z2_run):
    flow, cfg, result = z2_run
    doc = coding_document(result, Lattice.identity(2), flow, cfg)
    assert doc["flow"] == {"d": 2, "alpha": ["1/2", "-1/2"]}
    assert [p["Par"] for p in doc["partition"]["J"]] == [[1], [], [1]]
    budgets = budget_document(result)
    assert budgets["phi"] == result["phi"].to_json()
    assert budgets["chi_entropy"]["holds"] is True


# ---- Three-dimensional trajectories ----

@pytest.fixture(scope="module")
def witness3_run():
    """
    The P{1} witness diag(1/3, sqrt 3, sqrt 3) under (1/2, 1/2, -1) for t in [-40, 40].

    eta_2 = e^{3t/2} on the left and eta_1 = e^{3(log 3 - t)/2} on the right, so the
    trajectory leaves P{2} at t = -8/3 and enters P{1} at t = 8/3 + log 3.
    """
    flow = DiagonalFlow.of(["1/2", "1/2", "-1"])
    cfg = ToleranceConfig.schedule(math.exp(-16), 3)
    x = cusp_witness(ParabolicSubgroup(d=3, jumps=(1,)), 3)
    return flow, cfg, run_coding_pipeline(x, flow, cfg, 40)


@pytest.fixture(scope="module")
def borel3_run():
    """
    The B witness diag(1/4, 1/2, 8) under (1, 0, -1) for t in [-30, 30].

    With L = log 2, eta_2 drops below delta' = e^-3 before eta_1 on both ends:
    at t = 4L - 3 and t = L - 3 on the left, t = L + 3 and t = 4L + 3 on the right.
    """
    flow = DiagonalFlow.of(["1", "0", "-1"])
    cfg = ToleranceConfig.schedule(math.exp(-9), 3)
    x = cusp_witness(ParabolicSubgroup.B(3), 2)
    return flow, cfg, run_coding_pipeline(x, flow, cfg, 30)


def test_witness3_partition(witness3_run):
    _, _, result = witness3_run
    pieces = result["partition"].pieces
    assert [p.par.name for p in pieces] == ["P{2}", "G", "P{1}"]
    assert pieces[1].start == pytest.approx(-8 / 3, abs=1e-6)
    assert pieces[1].end == pytest.approx(8 / 3 + math.log(3), abs=1e-6)
    refined = result["partition"].refined
    assert [p.weyl.rep for p in refined] == [(0, 1, 2), (0, 1, 2), (2, 0, 1)]


def test_witness3_coding(witness3_run):
    _, _, result = witness3_run
    code = result["coding"]
    assert code.key(-40) == code.key(-3) == ((2,), (0, 1, 2))
    assert code.key(-2) == code.key(3) == ((), (0, 1, 2))
    assert code.key(4) == code.key(40) == ((1,), (2, 0, 1))
    assert code.to_json()[-1]["w"] == [3, 1, 2]
    assert result["consistency"] == []


def test_witness3_budgets(witness3_run):
    _, cfg, result = witness3_run
    budgets = result["budgets"]
    rN = cfg.r * 40
    assert budgets.ratio_count == pytest.approx(3 * cfg.r ** 2 * 16 / 40)
    # the P-pieces pay 3 log 3 / (2 sqrt 2) at each end, G pays |h| at t = -8/3 and 8/3 + log 3
    h_start = [-math.log(3) - 4 / 3, math.log(3) / 2 - 4 / 3, math.log(3) / 2 + 8 / 3]
    expected_err = 4 * 1.5 * math.log(3) / math.sqrt(2) + 2 * math.hypot(*h_start)
    assert budgets.ratio_err == pytest.approx(expected_err / rN, rel=1e-3)
    residual = [2 - 1.5 * math.log(3), -2.5 + 1.5 * math.log(3), 0.5]
    assert budgets.ratio_height == pytest.approx(math.hypot(*residual) / rN, rel=1e-3)
    assert budgets.ratio_unoriented == 0
    assert budgets.window_clipped and not budgets.small_n
    assert all(budgets.passed.values())


def test_borel3_uses_both_levels(borel3_run):
    _, _, result = borel3_run
    pieces = result["partition"].pieces
    assert [p.par.name for p in pieces] == ["B", "P{2}", "G", "P{2}", "B"]
    L = math.log(2)
    ends = [p.end for p in pieces[:-1]]
    assert ends == pytest.approx([L - 3, 4 * L - 3, L + 3, 4 * L + 3], abs=1e-6)
    assert [p.weyl.rep for p in result["partition"].refined] == \
        [(0, 1, 2), (0, 1, 2), (0, 1, 2), (1, 2, 0), (2, 1, 0)]


def test_borel3_coding(borel3_run):
    _, _, result = borel3_run
    code = result["coding"]
    assert code.key(-30) == code.key(-3) == ((1, 2), (0, 1, 2))
    assert code.key(-2) == code.key(-1) == ((2,), (0, 1, 2))
    assert code.key(0) == code.key(3) == ((), (0, 1, 2))
    assert code.key(4) == code.key(5) == ((2,), (1, 2, 0))
    assert code.key(6) == code.key(30) == ((1, 2), (2, 1, 0))
    assert result["consistency"] == []
    deep = [c for c in result["classifications"] if c.P.is_B]
    # eta_1 < e^-9 for t < L - 9 and t > 4L + 9
    assert len(deep) == (30 - 9 + 1) + (30 - 12 + 1)


def test_borel3_budgets(borel3_run):
    _, cfg, result = borel3_run
    budgets = result["budgets"]
    L = math.log(2)
    rN = cfg.r * 30
    assert budgets.ratio_count == pytest.approx(5 * cfg.r ** 2 * 9 / 30)
    h_G = math.sqrt((2 * L - 3) ** 2 + L ** 2 + (3 - L) ** 2)
    expected_err = 2 * (6 - 3 * L) / math.sqrt(2) + 2 * h_G
    assert budgets.ratio_err == pytest.approx(expected_err / rN, rel=1e-3)
    assert budgets.ratio_height == pytest.approx(math.sqrt(2) * (5 * L - 3) / rN, rel=1e-3)
    assert budgets.ratio_unoriented == 0
    assert all(budgets.passed.values())


# ---- Aggregation over arbitrary chi ----

def _random_chi(flow: DiagonalFlow, rng: random.Random):
    keys = [(w.parabolic.jumps, w.rep) for w in all_orientations(flow)]
    chi = {k: F(rng.randint(-12, 12), rng.randint(1, 4)) for k in keys}
    top = max(chi.values())
    if top < 0:
        chi = {k: v - top for k, v in chi.items()}
    return chi


@pytest.mark.parametrize("run", ["witness3_run", "borel3_run"])
def test_aggregation_holds_for_random_chi(request, run):
    flow, _, result = request.getfixturevalue(run)
    counts = region_counts(result["classifications"])
    rng = random.Random(2024)
    for _ in range(100):
        assert chi_aggregate_check(result["coding"], counts, _random_chi(flow, rng))


def test_aggregation_holds_for_random_chi_on_z2():
    flow = DiagonalFlow.of(["1/2", "-1/2"])
    # delta' = e^-7.5 keeps every integer time off the threshold
    cfg = ToleranceConfig(delta=math.exp(-16), delta_prime=math.exp(-7.5), r=0.9)
    result = run_coding_pipeline(Lattice.identity(2), flow, cfg, 40)
    assert result["consistency"] == []
    counts = region_counts(result["classifications"])
    rng = random.Random(11)
    for _ in range(100):
        assert chi_aggregate_check(result["coding"], counts, _random_chi(flow, rng))


# ---- Budgets along the tolerance schedule ----

SWEEP_DELTAS = [math.exp(-16), math.exp(-25), math.exp(-36)]


@pytest.mark.slow
@pytest.mark.parametrize("case", ["z2", "shifted_z2", "witness3"])
def test_budgets_along_the_schedule(case):
    if case == "z2":
        x, flow = Lattice.identity(2), DiagonalFlow.of(["1/2", "-1/2"])
    elif case == "shifted_z2":
        x, flow = Lattice.diagonal([F(1, 2), F(2)]), DiagonalFlow.of(["1/2", "-1/2"])
    else:
        x, flow = cusp_witness(ParabolicSubgroup(d=3, jumps=(1,)), 3), DiagonalFlow.of(["1/2", "1/2", "-1"])
    counts, errs = [], []
    for delta in SWEEP_DELTAS:
        cfg = ToleranceConfig.schedule(delta, flow.d)
        n_max = round(10 * abs(math.log(delta)))
        result = run_coding_pipeline(x, flow, cfg, n_max, phi=LinearFunctional.zero(flow.d))
        budgets = result["budgets"]
        assert all(budgets.passed.values()), (case, delta, budgets.ratios)
        counts.append(budgets.ratio_count)
        errs.append(budgets.ratio_err)
    assert counts == sorted(counts, reverse=True)
    assert errs == sorted(errs, reverse=True)
