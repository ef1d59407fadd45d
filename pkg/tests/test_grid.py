import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from homlab.grid import (DomainError, GridFunction, Lattice, LatticeMismatchError,
                         TruncationWarning, convolve, lq_norm, reflect, scale)
from homlab.groups import abelian, heisenberg

R1 = abelian(1)
H = heisenberg()


def line(R=4.0, half=400):
    return Lattice.from_box([R], [half])


def bump(g, lat, center, width):
    c = np.asarray(center, float)

    def fn(x):
        d = g.multiply(g.invert(c)[None, :], x.reshape(-1, g.n))
        s = np.minimum(g.quasi_norm(d) / width, 1.0)
        return (np.cos(np.pi * s) + 1) / 2

    return GridFunction.from_function(g, lat, fn)


def test_triangle_peak():
    lat = line()
    h = lat.h[0]
    f = GridFunction.from_function(R1, lat, lambda x: (np.abs(x[..., 0]) <= 0.5).astype(float))
    out = convolve(f, f)
    assert out.values[lat.half[0]] == pytest.approx(1.0, abs=2 * h)


def test_convolve_zero():
    lat = line()
    g = bump(R1, lat, [0.3], 0.5)
    assert np.all(convolve(GridFunction.zeros(R1, lat), g).values == 0)


def test_mollification_against_quadrature():
    lat = line(4.0, 800)
    h = lat.h[0]
    f = GridFunction.from_function(R1, lat, lambda x: np.exp(-x[..., 0] ** 2))
    d = bump(R1, lat, [0.0], 4 * h)
    d = d.with_values(d.values / d.integral())
    out = convolve(f, d)
    # direct quadrature of the mollification at 10 sample sites
    idx = np.linspace(200, 1400, 10).astype(int)
    x = lat.axes()[0]
    ref = np.array([np.sum(f.values * d.values[np.clip(i - np.arange(x.size) + 800, 0, x.size - 1)]
                           * ((0 <= i - np.arange(x.size) + 800) & (i - np.arange(x.size) + 800 < x.size)))
                    * h for i in idx])
    np.testing.assert_allclose(out.values[idx], ref, rtol=1e-10)
    err = np.linalg.norm(out.values - f.values) / np.linalg.norm(f.values)
    assert err <= 5 * h


def test_mismatched_lattices():
    a = GridFunction.zeros(R1, line(4.0, 100))
    b = GridFunction.zeros(R1, line(4.0, 101))
    with pytest.raises(LatticeMismatchError):
        convolve(a, b)


def test_reflect_even_and_involution():
    lat = line()
    f = GridFunction.from_function(R1, lat, lambda x: np.exp(-x[..., 0] ** 2))
    np.testing.assert_allclose(reflect(f).values, f.values, atol=1e-14)
    g = bump(R1, lat, [1.1], 0.7)
    np.testing.assert_array_equal(reflect(reflect(g)).values, g.values)


def test_heisenberg_reflect_moves_center():
    lat = Lattice.from_box([2, 2, 4], [16, 16, 32])
    p = np.array([0.5, -0.25, 0.75])
    f = bump(H, lat, p, 0.8)
    # pointwise oracle: bump centered at p evaluated at x^{-1}
    want = bump(H, lat, -p, 0.8)
    got = reflect(f)
    assert np.max(np.abs(got.values - f(H.invert(lat.points())).reshape(lat.shape))) <= 1e-12
    # x -> f(x^{-1}) peaks at the inverse center -p
    peak = lat.points()[np.argmax(got.values)]
    np.testing.assert_allclose(peak, -p, atol=max(lat.h))
    assert np.argmax(want.values) == np.argmax(got.values)


def test_scale_examples():
    lat = line(8.0, 800)
    f = GridFunction.from_function(R1, lat, lambda x: ((x[..., 0] >= 1) & (x[..., 0] <= 2)).astype(float))
    np.testing.assert_array_equal(scale(1.0, f).values, f.values)
    s = scale(2.0, f)
    x = lat.axes()[0]
    inner = (x > 2.02) & (x < 3.98)
    outer = (x < 1.98) | (x > 4.02)
    np.testing.assert_allclose(s.values[inner], 0.5)
    np.testing.assert_allclose(s.values[outer], 0.0)
    b = bump(R1, lat, [0.0], 1.0)
    assert scale(2.0, b).integral() == pytest.approx(b.integral(), rel=1e-3)


def test_scale_errors_and_truncation():
    lat = line(2.0, 200)
    b = bump(R1, lat, [0.0], 1.5)
    with pytest.raises(DomainError):
        scale(0.0, b)
    with pytest.warns(TruncationWarning) as rec:
        scale(3.0, b)
    assert 0 < rec[0].message.escaped_fraction < 1
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        scale(0.5, b)


def test_lq_examples():
    lat = line(2.0, 2000)
    ind = GridFunction.from_function(R1, lat, lambda x: (np.abs(x[..., 0]) < 0.5).astype(float))
    for q in (1.5, 2.0, 7.0):
        assert lq_norm(ind, q) == pytest.approx(1.0, abs=1e-6 + lat.h[0])
    b = bump(R1, lat, [0.0], 1.0)
    assert lq_norm(b.with_values(3 * b.values), np.inf) == pytest.approx(3.0)
    x = lat.axes()[0]
    inv = GridFunction(R1, lat, np.where((np.abs(x) >= 1) & (np.abs(x) <= 2), 1 / np.where(x == 0, 1, x), 0))
    assert lq_norm(inv, 2.0) == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(DomainError):
        lq_norm(b, 1.0)


vals = arrays(np.float64, 41, elements=st.floats(-3, 3, allow_nan=False))


@given(vals, vals, st.floats(-4, 4))
def test_convolution_linear(a, b, c):
    lat = Lattice((20,), (0.1,))
    k = GridFunction(R1, lat, np.exp(-lat.axes()[0] ** 2))
    fa, fb = GridFunction(R1, lat, a), GridFunction(R1, lat, b)
    lhs = convolve(fa.with_values(a + c * b), k).values
    rhs = convolve(fa, k).values + c * convolve(fb, k).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-10 * (1 + np.abs(rhs).max()))


@given(vals, vals)
def test_adjoint_by_reflection(a, b):
    lat = Lattice((20,), (0.1,))
    k = GridFunction(R1, lat, np.sin(3 * lat.axes()[0]) * np.exp(-lat.axes()[0] ** 2))
    f, g = GridFunction(R1, lat, a), GridFunction(R1, lat, b)
    lhs = convolve(f, k).inner(g)
    rhs = f.inner(convolve(g, reflect(k)))
    assert lhs == pytest.approx(rhs, abs=1e-9 * (1 + abs(lhs)))


@pytest.mark.parametrize("g,lat", [(R1, Lattice((30,), (0.1,))),
                                   (abelian(2), Lattice((8, 8), (0.25, 0.25))),
                                   (H, Lattice((6, 6, 10), (0.3, 0.3, 0.2)))],
                         ids=["R", "R2", "H"])
def test_methods_agree(g, lat, rng):
    f = GridFunction(g, lat, rng.standard_normal(lat.shape))
    k = GridFunction(g, lat, rng.standard_normal(lat.shape) * (np.abs(lat.points()).max(-1) < 0.7).reshape(lat.shape))
    ref = convolve(f, k, "reference").values
    for m in ("fft", "direct", "auto"):
        np.testing.assert_allclose(convolve(f, k, m).values, ref, atol=1e-10 * np.abs(ref).max())


def test_serialization_round_trip(tmp_path, rng):
    lat = Lattice((5, 6, 7), (0.1, 0.2, 0.3))
    f = GridFunction(H, lat, rng.standard_normal(lat.shape))
    assert np.array_equal(GridFunction.from_bytes(H, f.to_bytes()).values, f.values)
    f.save(tmp_path / "f.bin")
    g = GridFunction.load(H, tmp_path / "f.bin")
    assert g.lattice == lat and np.array_equal(g.values, f.values)
    with pytest.raises(ValueError):
        GridFunction.from_bytes(H, b"garbage!" + f.to_bytes()[8:])
