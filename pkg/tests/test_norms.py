import numpy as np
import pytest
from scipy.linalg import toeplitz

from homlab.decomposition import Decomposition, LinearOperatorHandle, NSchedule
from homlab.grid import DomainError, GridFunction, Lattice
from homlab.groups import abelian
from homlab.kernels import KernelSpec, hilbert_kernel
from homlab.norms import (EstimateReport, cotlar_table, decay_fit, dini_closed_form, dini_integral,
                          dini_modulus, l2_opnorm, loglog_fit, sharpness_probe, weighted_norm_lower)
from homlab.weights import BallSampler, power_weight

R1 = abelian(1)
K = hilbert_kernel()


def identity(lat):
    return LinearOperatorHandle(lambda f: f, lambda g: g, R1, lat, "id")


def taps_operator(lat, c=1.0):
    v = np.zeros(lat.shape)
    m = lat.half[0]
    v[m - 1:m + 2] = c * np.array([1, 2, 1]) / 4 / lat.h[0]
    return LinearOperatorHandle.convolution(GridFunction(R1, lat, v))


def test_identity_and_taps():
    lat = Lattice((15,), (0.1,))
    assert l2_opnorm(identity(lat), tol=1e-12).value == pytest.approx(1.0, abs=1e-12)
    col = np.zeros(lat.size)
    col[:2] = [0.5, 0.25]
    want = np.max(np.abs(np.linalg.eigvalsh(toeplitz(col))))
    got = l2_opnorm(taps_operator(lat), iters=20000, tol=0.0)
    assert got.value == pytest.approx(want, abs=1e-6)
    c = -2.5
    scaled = l2_opnorm(taps_operator(lat, c), iters=20000, tol=0.0).value
    assert scaled == pytest.approx(abs(c) * got.value, rel=1e-6)


def test_zero_operator():
    lat = Lattice((20,), (0.1,))
    zero = LinearOperatorHandle(lambda f: f.with_values(0 * f.values), lambda g: g.with_values(0 * g.values),
                                R1, lat)
    est = l2_opnorm(zero)
    assert est.value == 0.0 and est.converged


def test_decay_fit_examples():
    j = np.arange(1, 7)
    fit = decay_fit(j, 2.0 ** -j)
    assert fit.slope == pytest.approx(1.0, abs=1e-12) and fit.r2 == pytest.approx(1.0)
    assert decay_fit(j, np.full(6, 3.0)).slope == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        decay_fit([1, 2, 3], [1, 0.5, 0.25])
    with pytest.raises(ValueError):
        decay_fit(j, [1, 0.5, 0.0, 0.1, 0.1, 0.1])
    s, r2 = loglog_fit([1, 2, 4, 8], [3, 12, 48, 192])
    assert s == pytest.approx(2.0) and r2 == pytest.approx(1.0)


@pytest.fixture(scope="module")
def dec_line():
    return Decomposition(K, Lattice((1024,), (1 / 64,)), (-1, 2))


def test_tilde_norms_match_dense_oracle(dec_line, oracles):
    want = oracles["tilde_norms_1d"]["values"]
    got = [l2_opnorm(dec_line.piece_tilde(j).handle(True), iters=400, tol=1e-9).value
           for j in range(1, 7)]
    np.testing.assert_allclose(got, want, rtol=1e-4)
    fit = decay_fit(range(1, 7), want)
    assert fit.slope > 0 and fit.r2 >= 0.9


@pytest.fixture(scope="module")
def cotlar_measured():
    dec = Decomposition(K, Lattice((1024,), (1 / 32,)), (0, 3))
    out = {}
    for j in (1, 3):
        pieces = {k: dec.piece_G_k(j, k).handle(True) for k in dec.ks()}
        out[j] = cotlar_table(pieces, iters=300, tol=1e-10)[1]
    return out


def test_cotlar_table_against_dense(cotlar_measured, oracles):
    for j in (1, 3):
        want = np.array(oracles["cotlar_small"]["tables"][str(j)])
        np.testing.assert_allclose(cotlar_measured[j], want, rtol=1e-3)


def test_cotlar_oracle_shape(oracles):
    t1 = np.array(oracles["cotlar_small"]["tables"]["1"])
    t3 = np.array(oracles["cotlar_small"]["tables"]["3"])
    for t in (t1, t3):
        n = t.shape[0]
        for k in range(n):
            for kk in (k - 2, k + 2):
                if 0 <= kk < n:
                    assert t[k, k] >= t[k, kk]
    assert t3.max() <= t1.max()


def test_cotlar_zero_kernel():
    zero = KernelSpec(R1, lambda th: 0.0 * th[..., 0], label="zero")
    dec = Decomposition(zero, Lattice((512,), (1 / 16,)), (0, 2))
    ks, M = cotlar_table({k: dec.piece_G_k(1, k).handle(True) for k in dec.ks()})
    assert ks == [0, 1, 2] and np.all(M == 0)


def test_weighted_norm_trivial_cases(dec_line):
    lat = Lattice((200,), (0.01,))
    wg = power_weight(0.7, R1, lat)
    for p in (2.0, 3.0):
        got = weighted_norm_lower(identity(lat), wg.w.values, p)["value"]
        assert got == pytest.approx(1.0, abs=1e-6)
    op = dec_line.piece_tilde(1).handle(True)
    one = weighted_norm_lower(op, np.ones(op.lattice.shape), 2.0, iters=400, tol=1e-9)["value"]
    ref = l2_opnorm(op, iters=400, tol=1e-9).value
    assert one == pytest.approx(ref, rel=0.05)
    with pytest.raises(DomainError):
        weighted_norm_lower(op, np.zeros(op.lattice.shape))


def test_weighted_norm_p3_lower_bound_grows():
    # gradient ascent never decreases its starting ratio
    lat = Lattice((200,), (0.01,))
    op = taps_operator(lat)
    w = power_weight(0.5, R1, lat).w.values
    start = np.random.default_rng(3).standard_normal(lat.shape)
    r0 = weighted_norm_lower(op, w, 3.0, restarts=0, steps=0, starts=[start])["value"]
    r1 = weighted_norm_lower(op, w, 3.0, restarts=0, steps=30, starts=[start])["value"]
    assert 0 < r0 <= r1 <= 1.0 + 1e-9


@pytest.fixture(scope="module")
def sharp_op():
    dec = Decomposition(K, Lattice((512,), (1 / 16,)), (-3, 3))
    return dec.piece_full(2, NSchedule.powers_of_two(2)).handle(True)


def test_sharpness_against_dense(sharp_op, oracles):
    rep = sharpness_probe(sharp_op, sampler=BallSampler(), iters=400, tol=1e-8)
    rows = rep.tables["family"]
    dense = oracles["sharpness_dense"]
    for r in rows:
        want = dense[f"{r['a']:g}"]
        assert r["norm_lower"] == pytest.approx(want["norm"], rel=1e-4)
        assert r["norm_lower"] <= want["norm"] * (1 + 1e-9)
        assert r["Ap"] == pytest.approx(want["Ap"], rel=1e-12)
    slope, _ = loglog_fit([d["Ap"] for d in dense.values()], [d["norm"] for d in dense.values()])
    assert rep.quantities["exponent"] == pytest.approx(slope, abs=1e-3)
    assert 0.5 < slope <= 2.0
    assert rep.passed


def test_sharpness_scaling_invariance(sharp_op):
    def twice(fn):
        return lambda f: (lambda out: out.with_values(2.0 * out.values))(fn(f))

    doubled = LinearOperatorHandle(twice(sharp_op.apply), twice(sharp_op.adjoint), R1, sharp_op.lattice)
    a = sharpness_probe(sharp_op, iters=100, tol=1e-6).quantities["exponent"]
    b = sharpness_probe(doubled, iters=100, tol=1e-6).quantities["exponent"]
    assert b == pytest.approx(a, abs=1e-3)


def test_sharpness_family_errors(sharp_op):
    with pytest.raises(DomainError):
        sharpness_probe(sharp_op, a_family=(0.0,))
    with pytest.raises(DomainError):
        sharpness_probe(sharp_op, a_family=(0.0, 0.3, 0.6))
    with pytest.raises(DomainError):
        power_weight(-1.0, R1, sharp_op.lattice)


def test_dini_closed_forms():
    assert dini_closed_form(4) == pytest.approx(1 + 4 * np.log(2), abs=1e-12)
    assert dini_closed_form(4) == pytest.approx(3.7726, abs=1e-4)
    assert dini_closed_form(4, True) == pytest.approx(7.617, abs=1e-3)
    # the piecewise-linear rule is exact for min(1, 2^N t) with a node at the kink
    for lw in (False, True):
        ts = np.concatenate([2.0 ** np.arange(-12, -3), [1.0]])
        om = np.minimum(1.0, 16 * ts)
        assert dini_integral(ts, om, lw) == pytest.approx(dini_closed_form(4, lw), abs=1e-6)


def test_dini_modulus_smooth_kernel():
    lat = Lattice((512,), (1 / 64,))
    x = lat.axes()[0]
    kern = GridFunction(R1, lat, x * np.exp(-x ** 2))
    dm = dini_modulus(kern, radii=[1.0, 2.0])
    om = np.array(dm["omega"])
    assert np.all(np.diff(om) >= 0)
    assert om[0] < 1e-2 * om[-1]


def test_dini_regression(oracles):
    lat = Lattice((2048,), (1 / 64,))
    dec = Decomposition(K, lat, (-1, 2))
    s = NSchedule.powers_of_two(3)
    got = []
    for j in (1, 2, 3):
        dm = dini_modulus(dec.materialize_kernel(j, s), radii=2.0 ** np.arange(-1, 4))
        got.append(dini_integral(dm["t"], dm["omega"]))
    np.testing.assert_allclose(got, oracles["dini_1d"], rtol=1e-6)


def test_report_roundtrip():
    rep = EstimateReport("x")
    rep.check("a", True, 1.0, 2.0)
    assert rep.passed
    rep.check("b", False)
    d = rep.to_dict()
    assert not d["passed"] and [c["name"] for c in d["checks"]] == ["a", "b"]
