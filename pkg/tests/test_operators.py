import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carnotmax.errors import InputError
from carnotmax.groups import euclidean, heisenberg
from carnotmax.lattice import Ball, GridFunction, make_lattice, sample
from carnotmax.operators import (MaximalRequest, evaluate, local_maximal, maximal, maximal_commutator,
                                 nonlinear_commutator, oracle_maximal)
from carnotmax.verify.suites import oracle_lattice, oracle_requests

R1, R2, H1 = euclidean(1), euclidean(2), heisenberg()
R1_HALF = make_lattice(R1, 0.5, 2.0, margin=1.0)


def delta(lat):
    return GridFunction(lat, (np.abs(lat.points).sum(axis=1) == 0).astype(float))


def test_constant_input_gives_constant():
    for g in (R1, R2, H1):
        lat, radii, _ = oracle_lattice(g)
        f = GridFunction(lat, np.full(lat.size, 2.5))
        for mode in ("centered", "containing"):
            out = maximal(f, MaximalRequest(mode=mode, radii=radii))
            assert np.allclose(out.values[out.mask], 2.5, rtol=0, atol=1e-15)


def test_single_bump_hand_value():
    out = maximal(delta(R1_HALF), MaximalRequest(radii=(1.0,)))
    assert out.at([0.0]) == pytest.approx(1 / 3, abs=1e-15)
    assert oracle_maximal(delta(R1_HALF), MaximalRequest(radii=(1.0,))).at([0.0]) == pytest.approx(1 / 3, abs=1e-15)


def test_fractional_of_indicator_at_least_ball_weight():
    lat = make_lattice(R2, 0.125, 1.0, margin=0.5)
    ball = Ball((0, 0), 0.5)
    chi = GridFunction(lat, ball.indicator(lat).astype(float))
    beta = 0.5
    out = maximal(chi, MaximalRequest("fractional", alpha=beta, mode="containing", radii=(0.25, 0.5)))
    inside = ball.indicator(lat)
    assert np.all(out.values[inside] >= ball.measure(lat) ** (beta / 2) - 1e-15)


def test_commutator_hand_value_and_zero_cases():
    b = sample(lambda x: np.abs(x[:, 0]) ** 0.5, R1_HALF)
    one = GridFunction(R1_HALF, np.ones(R1_HALF.size))
    out = maximal_commutator(b, one, MaximalRequest(radii=(1.0,)))
    assert out.at([0.0]) == pytest.approx(2 * np.sqrt(0.5) / 3, abs=1e-15)
    const = GridFunction(R1_HALF, np.full(R1_HALF.size, 3.0))
    rng = np.random.default_rng(0)
    f = GridFunction(R1_HALF, rng.uniform(size=R1_HALF.size))
    for mode in ("centered", "containing"):
        req = MaximalRequest(mode=mode, radii=(0.5, 1.0))
        # the containing kernel works from prefix sums, so zero holds to rounding
        assert np.all(maximal_commutator(const, f, req).values[out.mask] <= 1e-13)
        assert np.all(maximal_commutator(b, GridFunction(R1_HALF, np.zeros(R1_HALF.size)), req)
                      .values[out.mask] == 0)
        assert np.all(np.abs(nonlinear_commutator(const, f, req).values[out.mask]) <= 1e-13)


def test_nonlinear_on_indicator_is_b_minus_local_maximal():
    lat = make_lattice(R1, 1 / 16, 2.0, margin=1.0)
    ball = Ball((0,), 0.5)
    chi = GridFunction(lat, ball.indicator(lat).astype(float))
    b = sample(lambda x: np.abs(x[:, 0]) ** 0.5, lat)
    radii = (1 / 16, 1 / 8, 1 / 4, 0.5)
    nl = nonlinear_commutator(b, chi, MaximalRequest(mode="containing", ball=ball, radii=radii))
    loc = local_maximal(b, ball, radii=radii)
    inside = ball.indicator(lat)
    assert np.allclose(nl.values[inside], b.values[inside] - loc.values[inside], atol=1e-14)


def test_local_maximal_examples():
    lat = make_lattice(R1, 1 / 16, 2.0, margin=1.0)
    ball = Ball((0,), 0.5)
    inside = ball.indicator(lat)
    const = GridFunction(lat, np.where(inside, -2.0, 7.0))
    assert np.all(local_maximal(const, ball).values[inside] == 2.0)
    chi = GridFunction(lat, inside.astype(float))
    m = local_maximal(chi, ball)
    assert np.all(m.values[inside] == 1.0)
    rng = np.random.default_rng(3)
    b = GridFunction(lat, rng.normal(size=lat.size))
    radii = (1 / 8, 1 / 4, 0.5)
    loc = local_maximal(b, ball, radii=radii)
    full = maximal(b, MaximalRequest(mode="containing", radii=radii))
    assert np.all(loc.values[inside] <= full.values[inside])


@pytest.mark.parametrize("group", [R1, R2, H1], ids=lambda g: g.name)
def test_fast_equals_oracle(group):
    lat, radii, ball = oracle_lattice(group)
    rng = np.random.default_rng(11)
    for _ in range(3):
        f = GridFunction(lat, rng.normal(size=lat.size))
        b = GridFunction(lat, rng.uniform(-1, 1, size=lat.size))
        restricted = [MaximalRequest(v, b=b, ball=ball, mode="containing", radii=radii)
                      for v in ("HL", "commutator", "nonlinear")]
        for req in oracle_requests(b, ball, radii, alpha=0.7) + restricted:
            fast, slow = evaluate(f, req), oracle_maximal(f, req)
            assert np.array_equal(fast.mask, slow.mask)
            assert np.max(np.abs(fast.values[fast.mask] - slow.values[slow.mask])) <= 1e-13


def test_request_validation():
    f = GridFunction(R1_HALF, np.ones(R1_HALF.size))
    with pytest.raises(InputError):
        MaximalRequest("commutator")
    with pytest.raises(InputError):
        MaximalRequest(mode="sideways")
    with pytest.raises(InputError):
        maximal(f, MaximalRequest("fractional", alpha=1.0, radii=(1.0,)))
    with pytest.raises(InputError):
        maximal(f, MaximalRequest(radii=(4.0,)))


lat_small = make_lattice(R1, 1 / 8, 1.0, margin=0.5)
vectors = st.lists(st.floats(-5, 5, allow_nan=False), min_size=lat_small.size, max_size=lat_small.size)


@settings(max_examples=60, deadline=None)
@given(vectors, vectors, st.floats(0, 4), st.sampled_from(["centered", "containing"]))
def test_maximal_is_sublinear_and_homogeneous(a, b, c, mode):
    req = MaximalRequest(mode=mode, radii=(0.25, 0.5))
    fa, fb = GridFunction(lat_small, a), GridFunction(lat_small, b)
    ma, mb = maximal(fa, req), maximal(fb, req)
    msum = maximal(GridFunction(lat_small, np.add(a, b)), req)
    core = ma.mask
    assert np.all(msum.values[core] <= ma.values[core] + mb.values[core] + 1e-12)
    scaled = maximal(GridFunction(lat_small, c * np.asarray(a)), req)
    assert np.allclose(scaled.values[core], c * ma.values[core], atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(vectors, vectors)
def test_containing_dominates_centred_and_commutator_nonnegative(a, b):
    f, sym = GridFunction(lat_small, a), GridFunction(lat_small, b)
    radii = (0.25, 0.5)
    cen = maximal(f, MaximalRequest(radii=radii))
    con = maximal(f, MaximalRequest(mode="containing", radii=radii))
    core = cen.mask
    assert np.all(con.values[core] >= cen.values[core] - 1e-12)
    mb = maximal_commutator(sym, f, MaximalRequest(mode="containing", radii=radii))
    assert np.all(mb.values[core] >= 0)


@settings(max_examples=60, deadline=None)
@given(vectors, vectors)
def test_nonlinear_bound_for_nonnegative_symbols(a, b):
    f, sym = GridFunction(lat_small, a), GridFunction(lat_small, np.abs(b))
    for mode in ("centered", "containing"):
        req = MaximalRequest(mode=mode, radii=(0.25, 0.5))
        nl = nonlinear_commutator(sym, f, req)
        mb = maximal_commutator(sym, f, req)
        core = nl.mask
        assert np.all(np.abs(nl.values[core]) <= mb.values[core] + 1e-13)
