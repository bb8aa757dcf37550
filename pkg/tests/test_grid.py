import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from axiswirl.errors import ConfigError, StateError
from axiswirl.grid import (Grid, MeshMap, expand_domain, interp_weights,
                           make_grid, regrid_field, resample, sample_at)


class TestMeshMap:
    def test_uniform_nodes_equispaced(self):
        m = MeshMap("uniform", 1.0)
        s = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
        assert np.array_equal(m.value(s), s)

    def test_tanh_zero_strength_degenerates_to_uniform(self):
        s = np.linspace(0.0, 1.0, 65)
        t = MeshMap("tanh", 7.0, 0.0)
        u = MeshMap("uniform", 7.0)
        np.testing.assert_allclose(t.value(s), u.value(s), atol=1e-14)
        np.testing.assert_allclose(t.deriv(s), u.deriv(s), atol=1e-14)

    def test_tanh_clusters_near_axis(self):
        # independent evaluation of the documented formula
        beta, A, n = 2.0, 10.0, 64
        m = MeshMap("tanh", A, beta)
        s = np.linspace(0.0, 1.0, n + 1)
        expected = A * (1.0 - np.tanh(beta * (1.0 - s)) / np.tanh(beta))
        np.testing.assert_allclose(m.value(s), expected, rtol=1e-14)
        d = np.diff(m.value(s))
        assert d[0] < d[-1]

    def test_roundtrip_inverse(self):
        for m in (MeshMap("uniform", 3.0), MeshMap("tanh", 11.0, 2.5)):
            s = np.linspace(0.0, 1.0, 33)
            assert np.max(np.abs(m.inverse(m.value(s)) - s)) < 1e-12

    def test_metric_consistency(self):
        m = MeshMap("tanh", 5.0, 1.7)
        s = np.linspace(0.05, 0.95, 19)
        h = 1e-6
        fd = (m.value(s + h) - m.value(s - h)) / (2 * h)
        np.testing.assert_allclose(m.deriv(s), fd, rtol=1e-8)
        fd2 = (m.deriv(s + h) - m.deriv(s - h)) / (2 * h)
        np.testing.assert_allclose(m.deriv2(s), fd2, rtol=1e-6)

    def test_bad_parameters_rejected(self):
        with pytest.raises(ConfigError):
            MeshMap("uniform", -1.0)
        with pytest.raises(ConfigError):
            MeshMap("spline", 1.0)
        with pytest.raises(ConfigError):
            MeshMap("tanh", 1.0, -3.0)


class TestBuildGrid:
    def test_minimum_size_enforced(self):
        with pytest.raises(ConfigError):
            make_grid(8, 32, 1.0, 1.0)

    def test_invariants(self):
        g = make_grid(48, 32, 20.0, 10.0, map_kind="tanh", stretch=2.0,
                      anchor_xi=3.6927, anchor_eta=1.0)
        assert g.xi[0] == 0.0 and g.eta[0] == 0.0
        assert np.all(np.diff(g.xi) > 0) and np.all(np.diff(g.eta) > 0)
        assert np.all(g.xi_s > 0) and np.all(g.eta_s > 0)
        assert g.xi[g.i_anchor] == pytest.approx(3.6927, abs=1e-12)
        assert g.eta[g.j_anchor] == pytest.approx(1.0, abs=1e-12)

    def test_uniform_equispaced(self):
        g = make_grid(16, 16, 1.0, 1.0)
        np.testing.assert_allclose(np.diff(g.xi), 1.0 / 16, rtol=1e-14)


class TestExpandDomain:
    def test_unit_factors(self):
        g = make_grid(32, 32, 5.0, 5.0)
        g2 = expand_domain(g, 1.0, 1.0)
        assert g2.xi_max == pytest.approx(5.0, rel=1e-14)
        assert g2.eta_max == pytest.approx(5.0, rel=1e-14)

    def test_doubling(self):
        g = make_grid(32, 32, 5.0, 5.0)
        g2 = expand_domain(g, 2.0 ** -5, 2.0 ** -5)
        assert g2.xi_max == pytest.approx(10.0, rel=1e-14)
        assert g2.eta_max == pytest.approx(10.0, rel=1e-14)
        assert (g2.nxi, g2.neta) == (g.nxi, g.neta)

    def test_reported_endpoint_extents(self):
        # base extents back-computed from the documented endpoint of the law:
        # (R, Z) = (3.3e-15, 6.2e-16) expands a ~1e4 frame to (3e7, 1.65e7)
        base_xi = 3.0e7 * (3.3e-15) ** 0.2
        base_eta = 1.65e7 * (6.2e-16) ** 0.2
        assert 1e4 < base_xi < 1e5 and 1e4 < base_eta < 1e5
        g = make_grid(32, 32, base_xi, base_eta)
        g2 = expand_domain(g, 3.3e-15, 6.2e-16)
        assert g2.xi_max == pytest.approx(3.0e7, rel=1e-12)
        assert g2.eta_max == pytest.approx(1.65e7, rel=1e-12)

    def test_nonpositive_location_rejected(self):
        g = make_grid(32, 32, 5.0, 5.0)
        with pytest.raises(StateError):
            expand_domain(g, 0.0, 1.0)

    @given(st.floats(min_value=1e-12, max_value=1.0),
           st.floats(min_value=1e-12, max_value=1.0))
    @settings(max_examples=30, deadline=None)
    def test_monotone_in_R(self, r1, frac):
        g = make_grid(32, 32, 5.0, 5.0)
        r2 = r1 * frac  # r2 <= r1
        a = expand_domain(g, r1, 1.0)
        b = expand_domain(g, r2, 1.0)
        assert b.xi_max >= a.xi_max * (1 - 1e-12)


class TestInterpolation:
    def test_constant_preserved(self):
        src = make_grid(32, 32, 3.0, 3.0, map_kind="tanh", stretch=1.5)
        dst = make_grid(24, 40, 3.0, 3.0)
        f = np.full(src.shape, 2.5)
        out = regrid_field(f, src, dst, extension="const")
        np.testing.assert_allclose(out, 2.5, rtol=1e-14)

    @given(st.lists(st.floats(min_value=-2, max_value=2), min_size=4, max_size=4),
           st.lists(st.floats(min_value=-2, max_value=2), min_size=4, max_size=4))
    @settings(max_examples=20, deadline=None)
    def test_cubic_reproduction(self, cx, cy):
        src = make_grid(32, 32, 3.0, 3.0, map_kind="tanh", stretch=1.5)
        dst = make_grid(20, 28, 2.9, 2.9)

        def poly(x, c):
            return c[0] + c[1] * x + c[2] * x ** 2 + c[3] * x ** 3

        f = poly(src.xi[:, None], cx) * poly(src.eta[None, :], cy)
        exact = poly(dst.xi[:, None], cx) * poly(dst.eta[None, :], cy)
        out = regrid_field(f, src, dst)
        scale = max(1.0, np.max(np.abs(exact)))
        assert np.max(np.abs(out - exact)) < 1e-11 * scale

    def test_fourth_order_error_vs_bruteforce(self):
        """sin x sin y refinement: global error bounded by the local
        brute-force interpolation error scale (both O(h^4))."""
        src = make_grid(64, 64, 1.0, 1.0)
        dst = make_grid(128, 128, 1.0, 1.0)
        f = np.sin(np.pi * src.xi[:, None]) * np.sin(np.pi * src.eta[None, :])
        exact = np.sin(np.pi * dst.xi[:, None]) * np.sin(np.pi * dst.eta[None, :])
        out = regrid_field(f, src, dst)
        err = np.max(np.abs(out - exact))

        # independent brute-force tensor Lagrange interpolation at 3 points
        rng = np.random.default_rng(7)
        pts = rng.uniform(0.3, 0.7, size=(3, 2))

        def brute(x, y):
            i = np.searchsorted(src.xi, x) - 1
            j = np.searchsorted(src.eta, y) - 1
            i = min(max(i - 1, 0), src.nxi - 3)
            j = min(max(j - 1, 0), src.neta - 3)
            total = 0.0
            for a in range(4):
                wa = 1.0
                for b in range(4):
                    if a != b:
                        wa *= (x - src.xi[i + b]) / (src.xi[i + a] - src.xi[i + b])
                for c in range(4):
                    wc = 1.0
                    for d in range(4):
                        if c != d:
                            wc *= (y - src.eta[j + d]) / (src.eta[j + c] - src.eta[j + d])
                    total += wa * wc * f[i + a, j + c]
            return total

        brute_errs = []
        for x, y in pts:
            exact_val = math.sin(math.pi * x) * math.sin(math.pi * y)
            ours = sample_at(f, src, x, y)[0]
            assert ours == pytest.approx(brute(x, y), abs=1e-13)
            brute_errs.append(abs(brute(x, y) - exact_val))
        h = 1.0 / 64
        C = max(max(brute_errs) / h ** 4, 1.0)
        assert err <= 10.0 * C * h ** 4

    def test_extension_beyond_domain(self):
        src = make_grid(32, 32, 2.0, 2.0)
        f = np.outer(np.cos(src.xi), np.ones(src.neta + 1)) + 1.0
        big = np.linspace(0.0, 3.0, 25)
        out_c = resample(f, src, big, src.eta, extension="const")
        out_z = resample(f, src, big, src.eta, extension="zero")
        outside = big > 2.0
        np.testing.assert_allclose(out_c[outside, :], f[-1, 0], rtol=1e-12)
        assert np.all(out_z[outside, :] == 0.0)

    def test_weights_sum_to_one_inside(self):
        g = make_grid(32, 32, 2.0, 2.0, map_kind="tanh", stretch=2.0)
        t = np.linspace(0.0, 2.0, 57) * 0.99
        idx, w, outside = interp_weights(g.xi, t)
        assert not outside.any()
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)
