import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carnotmax.errors import DataError, InputError
from carnotmax.groups import calibrate_c1, euclidean, heisenberg
from carnotmax.lattice import (Ball, BallFamily, GridFunction, build_stencil, check_same_lattice, fits, integrate,
                               make_lattice, read_grid, sample, scatter_max, window_deviation_sums, window_max,
                               window_sums, write_grid)

R1, R2, H1 = euclidean(1), euclidean(2), heisenberg()


def small_lattices():
    return [make_lattice(R1, 1 / 8, 1.0, margin=0.5), make_lattice(R2, 1 / 4, 1.0, margin=0.5),
            make_lattice(H1, 1 / 4, (1.0, 0.5), margin=0.5)]


def naive_members(lat, center_flat, r):
    """Points y with rho(x^-1 y) < r, by the group law on real coordinates."""
    g = lat.group
    x = lat.points[center_flat]
    return np.flatnonzero(g.hom_norm(g.mul(g.inv(x)[None, :], lat.points)) < r - 1e-12)


def test_r1_points_and_origin():
    lat = make_lattice(R1, 0.5, 1.0)
    assert np.allclose(lat.points.ravel(), [-1, -0.5, 0, 0.5, 1])
    for g, L in ((R2, 1.0), (H1, (1.0, 1.0))):
        lat = make_lattice(g, 0.5, L)
        assert (np.abs(lat.points).sum(axis=1) == 0).sum() == 1


def test_heisenberg_t_spacing_is_half_h_squared():
    lat = make_lattice(H1, 0.5, (1.0, 1.0))
    assert np.allclose(lat.axis_spacing, [0.5, 0.5, 0.125])


def test_sample_examples():
    lat = make_lattice(R1, 0.5, 1.0)
    assert np.all(sample(lambda x: np.ones(len(x)), lat).values == 1)
    b = sample(lambda x: R1.hom_norm(x) ** 0.5, make_lattice(R1, 0.25, 1.0))
    assert b.at([0.25]) == 0.5
    chi = sample(lambda x: (R1.hom_norm(x) < 1).astype(float), lat)
    assert chi.values.tolist() == [0, 1, 1, 1, 0]


def test_stencil_examples():
    lat = make_lattice(R1, 0.5, 1.0)
    st_ = build_stencil(lat, 1.0)
    assert st_.offsets.ravel().tolist() == [-1, 0, 1]
    assert st_.discrete_measure == 1.5
    for g, L in ((R1, 1.0), (R2, 1.0), (H1, (1.0, 1.0))):
        lat = make_lattice(g, 0.5, L)
        tiny = build_stencil(lat, 0.49)
        assert tiny.count == 1 and tiny.discrete_measure == lat.cell_measure


def test_heisenberg_stencil_matches_quadrature():
    lat = make_lattice(H1, 1 / 32, (1.25, 0.75), margin=1.1)
    assert build_stencil(lat, 1.0).discrete_measure == pytest.approx(calibrate_c1(H1), rel=1e-2)


def test_integrate_examples():
    lat = make_lattice(R1, 0.5, 1.0)
    ball = Ball((0,), 1.0)
    assert integrate(sample(lambda x: np.ones(len(x)), lat), ball) == 1.5
    assert integrate(sample(lambda x: x[:, 0], lat), ball) == 0


def test_stencils_are_symmetric_and_left_invariant():
    for lat in small_lattices():
        for r in (0.25, 0.5):
            stencil = build_stencil(lat, r)
            offs = {tuple(o) for o in stencil.offsets}
            assert offs == {tuple(-np.asarray(o)) for o in offs}
            rng = np.random.default_rng(1)
            for z in rng.choice(np.flatnonzero(fits(lat, r, lat.indices)), 10):
                via_stencil = np.sort(lat.flat(lat.translate(lat.indices[z][None], stencil.offsets))[0])
                assert np.array_equal(via_stencil, naive_members(lat, z, r))


@pytest.mark.parametrize("which", range(3))
def test_strided_kernels_match_naive(which):
    lat = small_lattices()[which]
    rng = np.random.default_rng(which)
    vals = rng.normal(size=lat.size)
    weights = rng.uniform(size=lat.size)
    for r in (0.25, 0.5):
        stencil = build_stencil(lat, r)
        ok = np.flatnonzero(fits(lat, r, lat.indices))
        centers = lat.indices[ok]
        sums = window_sums(lat, vals, stencil, centers)
        maxes = window_max(lat, vals, stencil, centers)
        dev = window_deviation_sums(lat, vals, stencil, centers, weights=weights)
        ref = rng.normal(size=len(ok))
        dev2 = window_deviation_sums(lat, vals, stencil, centers, reference=ref, power=2.5)
        scattered = scatter_max(lat, vals, stencil, ok)
        expect = np.full(lat.size, -np.inf)
        for k, z in enumerate(ok):
            m = naive_members(lat, z, r)
            expect[m] = np.maximum(expect[m], vals[z])
            assert sums[k] == pytest.approx(vals[m].sum(), abs=1e-12)
            assert maxes[k] == vals[m].max()
            assert dev[k] == pytest.approx(np.sum(np.abs(vals[z] - vals[m]) * weights[m]), abs=1e-12)
            assert dev2[k] == pytest.approx(np.sum(np.abs(ref[k] - vals[m]) ** 2.5), abs=1e-11)
        assert np.array_equal(scattered, expect)


def test_window_sums_nan_outside():
    lat = make_lattice(R1, 0.25, 1.0, margin=0.5)
    out = window_sums(lat, np.ones(lat.size), build_stencil(lat, 0.5))
    assert np.isnan(out[0]) and out[lat.size // 2] == 3


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.sampled_from([0.25, 0.5]))
def test_window_sums_linear(seed, r):
    lat = small_lattices()[1]
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(2, lat.size))
    stencil = build_stencil(lat, r)
    lhs = window_sums(lat, 2 * a - b, stencil)
    rhs = 2 * window_sums(lat, a, stencil) - window_sums(lat, b, stencil)
    assert np.allclose(lhs, rhs, equal_nan=True, atol=1e-12)


def test_grid_file_round_trip(tmp_path):
    for lat in small_lattices():
        f = sample(lambda x: np.sin(3 * x[:, 0]) + x[:, -1], lat)
        for binary in (False, True):
            path = tmp_path / f"f{binary}.grid"
            write_grid(f, path, binary=binary)
            g = read_grid(path)
            assert g.lattice == lat and np.array_equal(g.values, f.values)


def test_grid_file_errors(tmp_path):
    path = tmp_path / "bad.grid"
    path.write_text("group=euclidean1 h=0.5 extents=[1.0] layout=column-major\n0\n")
    with pytest.raises(DataError):
        read_grid(path)
    a = sample(lambda x: x[:, 0], make_lattice(R1, 0.5, 1.0))
    b = sample(lambda x: x[:, 0], make_lattice(R1, 0.25, 1.0))
    with pytest.raises(DataError):
        check_same_lattice(a, b)
    with pytest.raises(DataError):
        GridFunction(a.lattice, [1.0, 2.0])


def test_ball_family_validity():
    lat = make_lattice(R1, 0.25, 2.0, margin=1.0)
    within = Ball((0,), 1.0)
    fam = BallFamily(lat, (0.25, 0.5), within=within)
    inside = within.indicator(lat)
    for r in fam.radii:
        for z in np.flatnonzero(fam.valid(r)):
            assert inside[naive_members(lat, z, r)].all()
    with pytest.raises(InputError):
        BallFamily(lat, ())
