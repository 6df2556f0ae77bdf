import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carnotmax.errors import InputError, RefusalError
from carnotmax.groups import (ball_volume, calibrate_c1, estimate_c0, euclidean, format_calibration, get_group,
                              heisenberg, load_or_calibrate, parse_calibration_line, read_calibration)

H1 = heisenberg()
R1, R2 = euclidean(1), euclidean(2)
coords = st.floats(-3, 3, allow_nan=False)
h1_points = st.tuples(coords, coords, coords).map(np.array)


def test_heisenberg_law_examples():
    assert np.allclose(H1.mul(np.array([1.0, 0, 0]), np.array([0.0, 1, 0])), [1, 1, 0.5])
    a = np.array([1.0, 2, 3])
    assert np.allclose(H1.mul(a, H1.inv(a)), 0)
    assert np.allclose(H1.inv(np.array([1.0, 0, 0])), [-1, 0, 0])
    assert np.allclose(R2.inv(np.array([3.0, -4])), [-3, 4])


def test_identity_and_inverse_of_identity():
    for g in (R1, R2, H1):
        e = g.identity()
        a = np.arange(1, g.dim + 1, dtype=float)
        assert np.allclose(g.mul(e, a), a)
        assert np.allclose(g.inv(e), e)


def test_dilation_examples():
    assert np.allclose(H1.dilate(2, np.array([1.0, 1, 1])), [2, 2, 4])
    assert np.allclose(H1.dilate(0.5, H1.dilate(2, np.array([1.0, 1, 1]))), [1, 1, 1])
    a = np.array([0.3, -0.2, 0.7])
    assert np.allclose(H1.dilate(1, a), a)


def test_gauge_and_distance_examples():
    for g in (R1, R2, H1):
        assert g.hom_norm(g.identity()) == 0
    assert H1.hom_norm(np.array([1.0, 0, 0])) == pytest.approx(1)
    assert H1.hom_norm(np.array([0.0, 0, 1])) == pytest.approx(2)
    assert R1.dist(np.array([1.0]), np.array([4.0])) == pytest.approx(3)
    assert H1.dist(np.zeros(3), np.array([0.0, 0, 1])) == pytest.approx(2)
    a = np.array([0.4, 0.1, -0.3])
    assert H1.dist(a, a) == 0


@settings(max_examples=200, deadline=None)
@given(h1_points, h1_points, h1_points)
def test_heisenberg_group_axioms(a, b, c):
    assert np.allclose(H1.mul(H1.mul(a, b), c), H1.mul(a, H1.mul(b, c)), atol=1e-9)
    assert np.allclose(H1.mul(a, H1.inv(a)), 0, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(h1_points, h1_points, st.floats(0.1, 5), st.floats(0.1, 5))
def test_dilations_are_automorphisms_and_gauge_homogeneous(a, b, r, s):
    assert np.allclose(H1.dilate(r, H1.mul(a, b)), H1.mul(H1.dilate(r, a), H1.dilate(r, b)), atol=1e-8)
    assert np.allclose(H1.dilate(r, H1.dilate(s, a)), H1.dilate(r * s, a), atol=1e-8)
    assert H1.hom_norm(H1.dilate(r, a)) == pytest.approx(r * H1.hom_norm(a), rel=1e-12, abs=1e-12)
    assert H1.hom_norm(H1.inv(a)) == pytest.approx(H1.hom_norm(a), rel=1e-12, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(h1_points, h1_points)
def test_koranyi_triangle_inequality(a, b):
    assert H1.hom_norm(H1.mul(a, b)) <= H1.hom_norm(a) + H1.hom_norm(b) + 1e-9


def test_c1_values():
    assert calibrate_c1(R1) == 2.0
    assert calibrate_c1(R2) == pytest.approx(np.pi, abs=1e-3)
    # frozen 4-digit value of the Koranyi unit-ball volume, independently recomputed below
    assert calibrate_c1(H1) == pytest.approx(1.2338, abs=5e-4)


def test_heisenberg_c1_independent_oracle():
    # integrate in cylindrical coordinates: for radius s the t-range is |t| < sqrt(1 - s^4)/4
    s = (np.arange(200000) + 0.5) / 200000
    volume = np.sum(2 * np.pi * s * 2 * np.sqrt(1 - s ** 4) / 4) / 200000
    assert calibrate_c1(H1) == pytest.approx(volume, rel=2e-3)


def test_c0_estimates():
    assert estimate_c0(R2) <= 1 + 1e-12
    assert estimate_c0(H1) <= 1 + 1e-9
    assert estimate_c0(H1) >= 1.0


def test_refusals():
    with pytest.raises(RefusalError):
        ball_volume(H1, 1.0, 8)
    with pytest.raises(RefusalError):
        estimate_c0(H1, sample_count=10)
    with pytest.raises(InputError):
        get_group("sphere2")


def test_calibration_cache_is_idempotent(tmp_path):
    path = tmp_path / "cal.txt"
    g = load_or_calibrate("euclidean1", path)
    first = path.read_bytes()
    assert load_or_calibrate("euclidean1", path).c1 == g.c1 == 2.0
    assert path.read_bytes() == first
    line = format_calibration(g, 1024)
    assert line == "group=euclidean1 Q=1 c0=1.0 c1=2.0 resolution=1024"
    assert parse_calibration_line(line)[0].c1 == 2.0
    assert read_calibration(path)["euclidean1"][1] == 1024
