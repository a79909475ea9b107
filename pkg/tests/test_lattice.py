# tests/test_lattice.py

import math
import random
from fractions import Fraction
from itertools import combinations

import mpmath
import numpy as np
import pytest
from pydantic import ValidationError

from services.errors import CapacityError, DimensionError, PrecisionError, UniquenessError
from services.lattice.grassmann import (
    WeightProfile,
    WeightTerm,
    default_eps0,
    grassmann_distance,
    grassmann_intervals,
    orientation_of_subspace,
    weight_profile,
)
from services.lattice.lattice_types import Lattice, LatticeSnapshot, RationalSubspace, ToleranceConfig
from services.lattice.minima import eta, eta_set, successive_minima
from services.lattice.numeric import bracket_crossing, determinant, working_bits
from services.lattice.reduction import saturate, shortest_outside
from services.lattice.subspaces import (
    alpha_min_covol,
    covolume_squared,
    is_decomposable,
    min_covolume_sq,
    plucker_coordinates,
    submodularity_gap,
    unique_small_subspace,
)
from services.weyl.weyl_types import DiagonalFlow
from tests.factories import random_coefficients, random_lattice, random_unimodular, rebased, shear_lattice

F = Fraction


@pytest.fixture
def diag3() -> Lattice:
    return Lattice.diagonal([F(1, 4), F(1), F(4)])


@pytest.fixture
def loose_cfg() -> ToleranceConfig:
    return ToleranceConfig(delta=0.01, delta_prime=0.2, eta0=0.5)


# ---- Lattices ----

def test_rejects_non_unimodular():
    with pytest.raises(ValidationError):
        Lattice(d=2, columns=[[2, 0], [0, 1]])
    with pytest.raises(ValidationError):
        Lattice(d=2, columns=[[1, 2], [2, 4]])


def test_json_round_trip(diag3):
    assert Lattice.from_json(diag3.to_json()) == diag3
    assert diag3.to_json()["basis"][0] == ["1/4", "0", "0"]


# ---- Minima ----

def test_minima_examples(diag3):
    assert successive_minima(Lattice.identity(3)).minima_sq == [1, 1, 1]
    assert successive_minima(Lattice.diagonal([F(1, 2), F(2)])).minima_sq == [F(1, 4), F(4)]
    sheared = Lattice(d=2, columns=[[1, 0], [F(1, 2), 1]])
    assert successive_minima(sheared).minima_sq == [F(1), F(5, 4)]
    assert successive_minima(diag3).minima_sq == [F(1, 16), F(1), F(16)]


def test_eta(diag3):
    assert float(eta(Lattice.diagonal([F(1, 2), F(2)]), 1)) == pytest.approx(0.25)
    assert [float(eta(diag3, i)) for i in (1, 2)] == pytest.approx([0.25, 0.25])
    assert eta_set(diag3, 0.5) == [1, 2]
    assert eta_set(diag3, 0.25) == []
    assert eta_set(Lattice.identity(3), 0.5) == []


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_minima_do_not_depend_on_the_basis(seed):
    D = Lattice.diagonal([F(1, 2), F(2, 3), F(3)])
    x = rebased(D, random_unimodular(3, random.Random(seed)))
    m = successive_minima(x)
    assert m.minima_sq == [F(1, 4), F(4, 9), F(9)]
    # witness vectors reproduce the minima
    G = x.gram()
    for norm, y in zip(m.minima_sq, m.vectors):
        assert sum(y[i] * G[i][j] * y[j] for i in range(3) for j in range(3)) == norm


def test_minima_rotation_invariant():
    with mpmath.workprec(200):
        theta = mpmath.mpf(3) / 7
        c, s = mpmath.cos(theta), mpmath.sin(theta)
        base = [[F(1, 3), F(0)], [F(1), F(3)]]
        as_mpf = [[mpmath.mpf(v.numerator) / v.denominator for v in col] for col in base]
        cols = [[c * col[0] - s * col[1], s * col[0] + c * col[1]] for col in as_mpf]
    rotated = Lattice(d=2, columns=cols, exact=False, precision=160)
    before = successive_minima(Lattice(d=2, columns=base)).minima_sq
    after = successive_minima(rotated).minima_sq
    for a, b in zip(before, after):
        assert abs(float(a) - float(b)) < 1e-30


def test_capacity_guard():
    with pytest.raises(CapacityError):
        successive_minima(shear_lattice(4, seed=5), max_vectors=1)


def _shrink_second_minimum(monkeypatch, drop):
    def patched(Gc, level, cap, env=F(0)):
        norm, y = shortest_outside(Gc, level, cap, env)
        return (norm - norm * drop if level == 1 else norm), y

    monkeypatch.setattr("services.lattice.minima.shortest_outside", patched)


def test_inverted_minima_raise_precision_error(flow2, monkeypatch):
    _shrink_second_minimum(monkeypatch, F(1, 2))
    with pytest.raises(PrecisionError):
        successive_minima(Lattice.identity(2))
    # lambda_1^2 = e^-1e-9, lambda_2^2 = e^1e-9 at 86 bits; a 1e-6 drop is far outside the envelope
    snap = LatticeSnapshot(base=Lattice.identity(2), flow=flow2, t=1e-9, precision=53)
    _shrink_second_minimum(monkeypatch, mpmath.mpf("1e-6"))
    with pytest.raises(PrecisionError):
        successive_minima(snap)


def test_inversion_inside_envelope_is_a_tie(monkeypatch):
    still = DiagonalFlow.of(["0", "0"])
    snap = LatticeSnapshot(base=Lattice.identity(2), flow=still, t=1.0, precision=53)
    assert snap.bits == 85
    _shrink_second_minimum(monkeypatch, mpmath.ldexp(1, -80))
    m = successive_minima(snap)
    assert m.minima_sq[1] == m.minima_sq[0]
    assert m.eta(1) == 1


# ---- Covolumes ----

def test_alpha_examples(diag3):
    assert alpha_min_covol(diag3, 1)[0] == F(1, 4)
    best, V, second = alpha_min_covol(diag3, 2)
    assert best == F(1, 4)
    assert all(g[2] == 0 for g in V.generators)
    assert second == F(1)
    assert alpha_min_covol(diag3, 3)[0] == 1
    assert alpha_min_covol(Lattice.diagonal([F(1, 2), F(2)]), 1)[0] == F(1, 2)
    assert alpha_min_covol(Lattice.identity(4), 2)[0] == 1


@pytest.mark.parametrize("seed", range(4))
def test_hadamard_bound(seed):
    x = shear_lattice(3, seed)
    m = successive_minima(x)
    for l in (1, 2, 3):
        best_sq, V, _ = min_covolume_sq(x, l, minima=m)
        product_sq = math.prod(m.minima_sq[:l])
        assert best_sq <= product_sq
        assert covolume_squared(x, V) == best_sq
    assert alpha_min_covol(x, 3)[0] == 1


@pytest.mark.slow
def test_hadamard_bound_on_random_lattices():
    for seed in range(200):
        d = 2 + seed % 3
        x = random_lattice(d, seed) if seed % 2 else shear_lattice(d, seed)
        m = successive_minima(x)
        for l in range(1, d + 1):
            best_sq, V, _ = min_covolume_sq(x, l, minima=m)
            assert best_sq <= math.prod(m.minima_sq[:l]), (seed, l)
            assert covolume_squared(x, V) == best_sq
        assert alpha_min_covol(x, d)[0] == 1, seed


def _short_vectors(x: Lattice, radius_sq: Fraction):
    """Every vector of an upper triangular basis with norm^2 <= radius_sq, coordinates solved bottom-up."""
    g = x.matrix()
    d = x.d
    assert all(g[i][j] == 0 for j in range(d) for i in range(j + 1, d))
    R = math.sqrt(float(radius_sq)) + 1e-9
    G = x.gram()
    out = []

    def extend(i, tail):
        if i < 0:
            y = list(tail)
            if any(y) and sum(y[a] * G[a][b] * y[b] for a in range(d) for b in range(d)) <= radius_sq:
                out.append(y)
            return
        # |v_i| = |g_ii y_i + s| <= R
        s = float(sum(g[i][j] * tail[j - i - 1] for j in range(i + 1, d)))
        gii = float(g[i][i])
        lo, hi = sorted(((-R - s) / gii, (R - s) / gii))
        for yi in range(math.ceil(lo), math.floor(hi) + 1):
            extend(i - 1, (yi,) + tail)

    extend(d - 1, ())
    return out


@pytest.mark.parametrize("seed", range(3))
def test_covolume_matches_brute_force(seed):
    x = shear_lattice(3, seed)
    m = successive_minima(x)
    # a Gauss-reduced basis of the optimal plane has |v2|^2 <= (4/3) lambda_2^2
    vectors = _short_vectors(x, F(4, 3) * m.minima_sq[1])
    brute = None
    for a, b in combinations(vectors, 2):
        c = covolume_squared(x, [a, b])
        if c != 0 and (brute is None or c < brute):
            brute = c
    assert min_covolume_sq(x, 2, minima=m)[0] == brute
    assert min_covolume_sq(x, 1, minima=m)[0] == m.minima_sq[0]


@pytest.mark.slow
@pytest.mark.parametrize("d, seeds", [(3, range(3, 23)), (4, range(8))])
def test_plane_covolume_matches_brute_force(d, seeds):
    for seed in seeds:
        x = shear_lattice(d, seed)
        m = successive_minima(x)
        vectors = _short_vectors(x, F(4, 3) * m.minima_sq[1])
        brute = min(c for c in (covolume_squared(x, [a, b]) for a, b in combinations(vectors, 2)) if c != 0)
        assert min_covolume_sq(x, 2, minima=m)[0] == brute, seed


@pytest.mark.parametrize("seed", range(5))
def test_submodularity(seed):
    x = shear_lattice(4, seed)
    vecs = random_coefficients(4, seed, 4)
    L = RationalSubspace(lattice=x, generators=saturate(vecs[:2]))
    M = RationalSubspace(lattice=x, generators=saturate(vecs[1:3]))
    # L and M share a generator, so L ∩ M is a line
    assert submodularity_gap(L, M) >= 0
    assert submodularity_gap(L, L) == 0


@pytest.mark.slow
def test_submodularity_on_independent_pairs():
    rng = random.Random(5)
    for seed in range(500):
        d = 3 + seed % 2
        x = shear_lattice(d, seed % 50)
        l, m = rng.randint(1, d - 1), rng.randint(1, d - 1)
        L = RationalSubspace(lattice=x, generators=saturate(random_coefficients(d, seed, l)))
        M = RationalSubspace(lattice=x, generators=saturate(random_coefficients(d, 10_000 + seed, m)))
        assert submodularity_gap(L, M) >= 0, (seed, l, m)


def test_plucker_decomposable():
    p = plucker_coordinates([[1, 0, 0, 0], [0, 1, 0, 0]])
    assert is_decomposable(p, 4, 2)
    q = {I: 0 for I in combinations(range(4), 2)}
    q[(0, 1)] = 1
    q[(2, 3)] = 1
    assert not is_decomposable(q, 4, 2)


def test_unique_small_subspace(diag3, loose_cfg):
    V1 = unique_small_subspace(diag3, 1, loose_cfg)
    assert [abs(c) for c in V1.generators[0]] == [1, 0, 0]
    V2 = unique_small_subspace(diag3, 2, loose_cfg)
    assert V2.dim == 2 and all(g[2] == 0 for g in V2.generators)
    with pytest.raises(UniquenessError):
        unique_small_subspace(Lattice.identity(3), 1, loose_cfg)
    with pytest.raises(DimensionError):
        unique_small_subspace(diag3, 3, loose_cfg)


def test_subspace_tracks_the_flow(flow3, loose_cfg):
    x = Lattice.diagonal([F(1, 16), F(4), F(4)])
    assert [abs(c) for c in unique_small_subspace(x, 1, loose_cfg).generators[0]] == [1, 0, 0]
    for t in (-1.0, 0.5, 2.0):
        snap = LatticeSnapshot(base=x, flow=flow3, t=t)
        assert [abs(c) for c in unique_small_subspace(snap, 1, loose_cfg).generators[0]] == [1, 0, 0]


# ---- Grassmannian ----

def test_grassmann_distance_examples():
    e1, e2 = [1.0, 0.0], [0.0, 1.0]
    assert grassmann_distance(e1, e1) == pytest.approx(0.0, abs=1e-12)
    assert grassmann_distance(e1, e2) == pytest.approx(1.0)
    assert grassmann_distance(e1, [1.0, 1.0]) == pytest.approx(math.sqrt(2) / 2)
    with pytest.raises(DimensionError):
        grassmann_distance([1.0, 0.0, 0.0], e1)


def test_grassmann_distance_bounded_by_unit_vectors():
    gen = np.random.default_rng(11)
    for _ in range(50):
        v, w = gen.normal(size=4), gen.normal(size=4)
        bound = np.linalg.norm(v / np.linalg.norm(v) - w / np.linalg.norm(w))
        assert grassmann_distance(v, w) <= bound + 1e-12


def test_default_eps0(flow2):
    assert default_eps0(flow2) == pytest.approx(1.0 / 3.0)
    # e1 and e2 share the eigenvalue 1/2; only lines against e3 count
    assert default_eps0(DiagonalFlow.of(["1/2", "1/2", "-1"])) == pytest.approx(1.0 / 3.0)


def test_profile_groups_coordinates_by_eigenvalue(loose_cfg):
    flow = DiagonalFlow.of(["1", "0", "0", "-1"])
    # span{e1 + e2, e3 - e4}: e1^e4 and e2^e3 both have eigenvalue 0
    V = RationalSubspace(lattice=Lattice.identity(4), generators=[[1, 1, 0, 0], [0, 0, 1, -1]])
    profile = weight_profile(V, flow)
    assert [term.beta for term in profile.terms] == [-1.0, 0.0, 1.0]
    middle = profile.terms[1]
    assert middle.multiset is None
    assert middle.multisets == ((F(-1), F(1)), (F(0), F(0)))
    assert middle.log_mass == pytest.approx(math.log(2))
    assert profile.terms[2].multiset == (F(0), F(1))
    assert orientation_of_subspace(V, flow, loose_cfg) is None
    assert orientation_of_subspace(V, flow, loose_cfg, t=5.0) == (F(0), F(1))


def test_shared_eigenvalue_dominance_has_no_orientation():
    spread = WeightTerm(multiset=None, multisets=((F(-1), F(1)), (F(0), F(0))), beta=0.0, log_mass=0.0)
    single = WeightTerm(multiset=(F(0), F(1)), multisets=((F(0), F(1)),), beta=1.0, log_mass=-20.0)
    profile = WeightProfile(terms=(spread, single))
    log_eps_sq = 2 * math.log(1 / 3)
    assert profile.dominant_index(0.0, log_eps_sq) == 0
    assert profile.dominant(0.0, log_eps_sq) is None
    assert profile.dominant(20.0, log_eps_sq) == (F(0), F(1))


def test_orientation_of_subspace(flow3, loose_cfg):
    Z3 = Lattice.identity(3)
    assert orientation_of_subspace(RationalSubspace(lattice=Z3, generators=[[1, 0, 0]]), flow3, loose_cfg) == (F(1, 2),)
    assert orientation_of_subspace(RationalSubspace(lattice=Z3, generators=[[1, 0, 1]]), flow3, loose_cfg) is None
    tilted = Lattice.diagonal([F(1), F(1000), F(1, 1000)])
    V = RationalSubspace(lattice=tilted, generators=[[1, 0, 1]])
    assert orientation_of_subspace(V, flow3, loose_cfg) == (F(1, 2),)


def test_grassmann_intervals_gap(flow3):
    cfg = ToleranceConfig(delta=0.01, delta_prime=0.2, eta0=0.5, eps0=math.exp(-3))
    V = RationalSubspace(lattice=Lattice.identity(3), generators=[[1, 0, 1]])
    result = grassmann_intervals(V, flow3, cfg, (-10.0, 10.0))
    first, second = result.intervals
    assert first.multiset == (F(-1),) and second.multiset == (F(1, 2),)
    assert first.start == -10.0 and first.clipped_start
    assert first.end == pytest.approx(-2.0, abs=1e-6)
    assert second.start == pytest.approx(2.0, abs=1e-6)
    assert second.end == 10.0 and second.clipped_end
    assert result.gap_length == pytest.approx(4.0, abs=1e-5)
    assert result.increasing


def test_single_weight_interval_is_the_window(flow3, loose_cfg):
    V = RationalSubspace(lattice=Lattice.identity(3), generators=[[1, 0, 0]])
    result = grassmann_intervals(V, flow3, loose_cfg, (-5.0, 7.0))
    assert len(result.intervals) == 1
    assert (result.intervals[0].start, result.intervals[0].end) == (-5.0, 7.0)
    assert result.gap_length == 0


# ---- Numerics ----

def test_working_bits():
    assert working_bits(128, 1.0, 10.0) == 128 + 29 + 32
    assert working_bits(128, 1.0, -10.0) == working_bits(128, 1.0, 10.0)


def test_exact_determinant():
    assert determinant([[F(1, 2), F(0)], [F(0), F(2)]]) == 1
    assert determinant([[F(1), F(2), F(3)], [F(0), F(1), F(4)], [F(5), F(6), F(0)]]) == 1


def test_bracket_crossing_skips_integers():
    lo, hi = bracket_crossing(lambda t: t > 2.5, 0.0, 10.0, 1e-6)
    assert lo <= 2.5 < hi
    assert hi - lo <= 1e-6
    lo, hi = bracket_crossing(lambda t: t >= 3.0, 0.0, 10.0, 1e-6)
    assert hi == 3.0
    with pytest.raises(ValueError):
        bracket_crossing(lambda t: True, 0.0, 1.0, 1e-6)


def test_snapshot_precision_grows_with_time(flow2):
    x = Lattice.identity(2)
    assert LatticeSnapshot(base=x, flow=flow2, t=0.0).bits == 0
    near = LatticeSnapshot(base=x, flow=flow2, t=1.0).bits
    far = LatticeSnapshot(base=x, flow=flow2, t=100.0).bits
    assert far > near > 0


def test_tolerance_schedule():
    cfg = ToleranceConfig.schedule(math.exp(-16), 2)
    assert cfg.delta_prime == pytest.approx(math.exp(-4))
    assert cfg.r == pytest.approx(0.25 ** 0.25)
    with pytest.raises(ValidationError):
        ToleranceConfig(delta=0.1, delta_prime=0.2)
    relaxed = ToleranceConfig(delta=0.5, delta_prime=0.5, eta0=0.6, strict=False)
    assert relaxed.log_levels(2)[0] == pytest.approx(math.log(0.5))
