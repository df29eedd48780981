"""Dual-number arithmetic against finite differences and numpy charpoly."""

import numpy as np
import pytest

from magnetofisher.dual import D2, DualMatrix, charpoly_coefficients

RNG = np.random.default_rng(7)


def _scalar_func(x, y):
    # generic holomorphic test function of two complex variables
    return (x * y + 2.0) / (x + 3.0) * np.exp(0.3 * y) + np.sqrt(x + 2.5)


def _dual_func(x, y):
    return ((x * y + 2.0) / (x + 3.0) * (0.3 * y).exp() + (x + 2.5).sqrt())


def test_first_and_second_derivatives_match_finite_differences():
    x0, y0 = 0.4 + 0.2j, -0.3 + 0.1j
    x = D2.seed(x0, 0, 2)
    y = D2.seed(y0, 1, 2)
    out = _dual_func(x, y)

    h = 1e-4   # balances truncation against roundoff for second differences

    def f(a, b):
        return _scalar_func(a, b)

    fd_x = (f(x0 + h, y0) - f(x0 - h, y0)) / (2 * h)
    fd_y = (f(x0, y0 + h) - f(x0, y0 - h)) / (2 * h)
    fd_xx = (f(x0 + h, y0) - 2 * f(x0, y0) + f(x0 - h, y0)) / h ** 2
    fd_yy = (f(x0, y0 + h) - 2 * f(x0, y0) + f(x0, y0 - h)) / h ** 2
    fd_xy = (f(x0 + h, y0 + h) - f(x0 + h, y0 - h)
             - f(x0 - h, y0 + h) + f(x0 - h, y0 - h)) / (4 * h ** 2)

    assert out.val == pytest.approx(f(x0, y0), rel=1e-14)
    assert out.g[0] == pytest.approx(fd_x, rel=1e-7)
    assert out.g[1] == pytest.approx(fd_y, rel=1e-7)
    assert out.h[0, 0] == pytest.approx(fd_xx, rel=1e-6)
    assert out.h[1, 1] == pytest.approx(fd_yy, rel=1e-6)
    assert out.h[0, 1] == pytest.approx(fd_xy, rel=1e-6)


def test_reciprocal_and_rsub():
    x = D2.seed(2.0 + 1.0j, 0, 1)
    y = 1.0 / x
    assert (x * y).val == pytest.approx(1.0, rel=1e-14)
    z = 3.0 - x
    assert z.val == pytest.approx(1.0 - 1.0j, rel=1e-14)
    assert z.g[0] == pytest.approx(-1.0)


def test_charpoly_matches_numpy_poly():
    a = RNG.normal(size=(6, 6)) + 1j * RNG.normal(size=(6, 6))
    mine = charpoly_coefficients(a)
    ref = np.poly(a)           # ordered highest power first
    ref = ref[::-1]
    assert np.allclose(mine, ref, rtol=1e-10, atol=1e-10)


def test_dual_matrix_charpoly_derivatives_match_fd():
    n = 4
    base = RNG.normal(size=(n, n)) + 1j * RNG.normal(size=(n, n))
    pert = RNG.normal(size=(n, n)) + 1j * RNG.normal(size=(n, n))

    def coeffs_at(s):
        return charpoly_coefficients(base + s * pert)

    s_seed = D2.seed(0.0, 0, 1)
    dm = DualMatrix(base.copy(),
                    pert[None, :, :].astype(complex).copy(),
                    np.zeros((1, 1, n, n), dtype=complex))
    dual_coeffs = charpoly_coefficients(dm)

    h = 1e-6
    up, dn, mid = coeffs_at(h), coeffs_at(-h), coeffs_at(0.0)
    for j in range(n + 1):
        fd1 = (up[j] - dn[j]) / (2 * h)
        fd2 = (up[j] - 2 * mid[j] + dn[j]) / h ** 2
        assert dual_coeffs[j].val == pytest.approx(mid[j], rel=1e-12, abs=1e-12)
        assert dual_coeffs[j].g[0] == pytest.approx(fd1, rel=1e-6, abs=1e-6)
        assert dual_coeffs[j].h[0, 0] == pytest.approx(fd2, rel=2e-3, abs=2e-3)
