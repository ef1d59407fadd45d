import numpy as np
import pytest
from scipy.integrate import quad

from homlab.grid import Lattice, TruncationError, lq_norm
from homlab.groups import abelian, heisenberg
from homlab.kernels import (LN2, KernelMeanError, KernelSpec, RadialFactor, a_j, a_j_quadrature,
                            b_j, build_K0, dq_norm, hilbert_kernel, lambda_modulus, phi_t)

R1 = abelian(1)
K = hilbert_kernel()


@pytest.fixture(scope="module")
def k0_line():
    return build_K0(K, Lattice.from_box([8.0], [4096]))


def test_K0_examples(k0_line):
    assert K(np.array([[1.5]]))[0] == pytest.approx(2 / 3, abs=1e-9)
    assert k0_line.grid.integral() == pytest.approx(0.0, abs=1e-8)
    fine = build_K0(K, Lattice.from_box([2.0], [8192]))
    assert lq_norm(fine.grid, 2.0) == pytest.approx(1.0, abs=1e-3)
    assert K.norm_q == 1.0 and abs(K.mean) < 1e-12


def test_kernel_mean_rejection():
    with pytest.raises(KernelMeanError):
        KernelSpec(R1, lambda th: np.ones(th.shape[:-1]), enforce=False)
    # an enforced kernel is corrected on the grid instead
    spec = KernelSpec(R1, lambda th: 1.0 + th[..., 0])
    k0 = build_K0(spec, Lattice.from_box([4.0], [400]))
    assert k0.grid.integral() == pytest.approx(0.0, abs=1e-12)


def test_heisenberg_K0_mean_zero():
    H = heisenberg()
    spec = KernelSpec(H, lambda th: np.sign(th[..., 0]))
    assert abs(spec.mean) < 1e-10
    k0 = build_K0(spec, Lattice.from_box([2.0, 2.0, 4.0], [16, 16, 32]))
    assert abs(k0.grid.integral()) < 1e-10


def test_A0_support_and_mean(k0_line):
    A = a_j(k0_line, 0)
    h = k0_line.lattice.h[0]
    rho = A.rho()
    assert np.all(A.values[(rho < 0.5 - 2 * h) | (rho > 4 + 2 * h)] == 0)
    for j in (-1, 0, 1):
        assert abs(a_j(k0_line, j).integral()) <= 1e-7


def test_A_j_truncation(k0_line):
    with pytest.raises(TruncationError):
        a_j(k0_line, 2)


def test_A_j_l1_norm_constant():
    # || A_j K_0 ||_1 = 2 ln 2 in the continuum for 1/x (scale invariant in j)
    k0 = build_K0(K, Lattice.from_box([64.0], [8192]))
    C = [np.sum(np.abs(a_j(k0, j).values)) * k0.lattice.h[0] / K.norm_q for j in range(-2, 5)]
    np.testing.assert_allclose(C, 2 * LN2, rtol=2e-2)
    assert max(C) / min(C) < 1.05


def test_quadrature_route_agrees(k0_line):
    a = a_j(k0_line, 0).values
    b = a_j_quadrature(k0_line, 0, nodes=64).values
    assert np.linalg.norm(a - b) / np.linalg.norm(a) < 2e-2


def test_B_j_constant_factors(k0_line):
    A = a_j(k0_line, 0).values
    one = RadialFactor(lambda t: np.ones_like(t))
    two = RadialFactor(lambda t: 2 * np.ones_like(t))
    assert np.array_equal(b_j(k0_line, 0, one).values, A)
    np.testing.assert_array_equal(b_j(k0_line, 0, two).values, 2 * A)


def test_B_0_power_factor_against_quadrature(k0_line):
    hf = RadialFactor(lambda t: np.minimum(t, 8.0) ** 0.1)
    got = np.sum(np.abs(b_j(k0_line, 0, hf).values)) * k0_line.lattice.h[0]
    # 2 int phi(t) int_t^{2t} r^{0.1} dr/r dt
    want = 2 * quad(lambda t: phi_t(t) * t ** 0.1 * (2 ** 0.1 - 1) / 0.1, 0.5, 2, limit=200)[0]
    assert np.isfinite(got)
    assert got == pytest.approx(want, rel=5e-3)


def test_phi_partition_identity():
    t = np.geomspace(0.05, 20, 200)
    s = sum(2.0 ** (-j) * t * phi_t(2.0 ** (-j) * t) for j in range(-12, 13))
    np.testing.assert_allclose(s, 1 / LN2, atol=1e-6)
    assert quad(phi_t, 0.5, 2, limit=200)[0] == pytest.approx(1.0, abs=1e-8)


def test_dq_norm_examples():
    one = lambda t: np.ones_like(t)
    for q in (1.5, 2.0, 4.0):
        assert dq_norm(one, q) == pytest.approx(LN2 ** (1 / q), abs=1e-3)
    assert dq_norm(one, 2.0) == pytest.approx(0.8326, abs=1e-3)
    assert dq_norm(lambda t: 0 * t, 2.0) == 0.0
    # the top block dominates: (int_8^16 t dt)^{1/2} = sqrt(96)
    assert dq_norm(lambda t: t, 2.0, (0, 3)) == pytest.approx(np.sqrt(96.0), rel=1e-10)


def test_lambda_modulus_examples():
    const = lambda t: 3.0 + 0 * t
    assert all(lambda_modulus(const, t) == 0.0 for t in (0.01, 0.5, 1.0))
    lin = lambda t: t
    assert lambda_modulus(lin, 0.5, radii=[1.0]) <= 1.0 * (0.5 * 1.0 / 2) * LN2 * (1 + 1e-12)
    h = lambda t: 1 + 0.5 * np.sin(np.log(np.abs(t) + 1e-300))
    ts = 2.0 ** -np.arange(8, -1, -1)
    us = [lambda_modulus(h, t) for t in ts]
    assert all(b >= a for a, b in zip(us, us[1:]))


def test_radial_factor_caches():
    r = RadialFactor(lambda t: 1 + 0.5 * np.sin(np.log(t)), q=2.0)
    assert 0 < r.dq < 1.5 and np.isfinite(r.lam)
    assert r.describe()["dq"] == r.dq
