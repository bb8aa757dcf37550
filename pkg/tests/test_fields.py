import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from axiswirl.fields import (far_field_cutoff, gamma_from_u1, init_ring,
                             init_swirl, swirl_profile, u1_from_gamma)
from axiswirl.grid import make_grid


@pytest.fixture
def unit_grid():
    # uniform nodes with r = 1, z = 0.25 exactly on the mesh
    return make_grid(20, 16, 1.25, 0.5)


class TestSwirlSeed:
    def test_zero_at_unit_radius(self, unit_grid):
        assert swirl_profile(1.0, 0.3) == 0.0
        assert swirl_profile(1.2, 0.3) == 0.0

    def test_zero_at_symmetry_plane(self, unit_grid):
        assert swirl_profile(0.5, 0.0) == 0.0

    def test_axis_quarter_height_value(self):
        # sin(pi/2) = 1; denominator 1 + 12.5 sin(pi/4)^2 = 1 + 12.5/2 = 7.25
        assert swirl_profile(0.0, 0.25) == pytest.approx(12000.0 / 7.25, rel=1e-12)

    def test_fieldset_wiring(self, unit_grid):
        f = init_swirl(unit_grid)
        np.testing.assert_allclose(
            f.gamma, f.u1 * unit_grid.xi[:, None] ** 2, atol=1e-12)
        assert np.all(f.omega1 == 0.0) and np.all(f.psi1 == 0.0)
        assert np.all(f.u1[:, 0] == 0.0)         # odd in eta
        assert np.all(f.gamma[0, :] == 0.0)       # gamma ~ xi^2


class TestU1FromGamma:
    def test_quadratic_gamma(self, unit_grid):
        gamma = unit_grid.xi[:, None] ** 2 * np.ones((1, unit_grid.neta + 1))
        u1 = u1_from_gamma(gamma, unit_grid)
        np.testing.assert_allclose(u1, 1.0, atol=1e-10)

    def test_quartic_gamma(self, unit_grid):
        gamma = unit_grid.xi[:, None] ** 4 * np.ones((1, unit_grid.neta + 1))
        u1 = u1_from_gamma(gamma, unit_grid)
        exact = np.broadcast_to(unit_grid.xi[1:, None] ** 2, u1[1:, :].shape)
        np.testing.assert_allclose(u1[1:, :], exact, atol=1e-12)
        assert abs(u1[0, 0]) < 1e-12

    def test_axis_fit_oracle(self):
        # gamma = xi^2 (2 + cos xi): the Taylor expansion gives u1(0) = 3
        g = make_grid(64, 16, 1.0, 1.0)
        gamma = (g.xi[:, None] ** 2 * (2.0 + np.cos(g.xi[:, None]))
                 * np.ones((1, g.neta + 1)))
        u1 = u1_from_gamma(gamma, g)
        h = g.xi[1]
        assert abs(u1[0, 0] - 3.0) < max(h ** 2, 1e-7)

    @given(st.integers(min_value=1, max_value=5))
    @settings(max_examples=5, deadline=None)
    def test_roundtrip_off_axis(self, k):
        g = make_grid(32, 16, 2.0, 1.0)
        u1 = np.cos(k * g.xi[:, None]) * np.sin(np.pi * g.eta[None, :])
        back = u1_from_gamma(gamma_from_u1(u1, g), g)
        np.testing.assert_allclose(back[1:, :], u1[1:, :], atol=1e-13)


class TestRingSeed:
    def test_peak_normalized_and_parity(self):
        g = make_grid(64, 64, 30.0, 15.0, map_kind="tanh", stretch=2.0,
                      anchor_xi=3.6927, anchor_eta=1.0)
        f = init_ring(g, 3.6927, 2.6, 1.4, 1.4)
        assert np.max(f.u1) == pytest.approx(1.0, rel=1e-12)
        assert np.all(f.u1[:, 0] == 0.0)
        assert np.all(f.gamma[0, :] == 0.0)
        assert np.all(f.omega1 == 0.0)
        # peak near the requested center
        i, j = np.unravel_index(np.argmax(f.u1), f.u1.shape)
        assert abs(g.xi[i] - 3.6927) < 1.0 and abs(g.eta[j] - 2.6) < 1.0

    def test_cutoff_kills_far_field(self):
        g = make_grid(32, 32, 40.0, 40.0)
        f = np.ones(g.shape)
        out = far_field_cutoff(f, g, rho_c=10.0, k=8)
        assert out[0, 0] == pytest.approx(1.0, rel=1e-12)
        i = np.searchsorted(g.xi, 10.0)
        assert out[i, 0] == pytest.approx(np.exp(-(g.xi[i] / 10.0) ** 8), rel=1e-12)
        assert out[-1, -1] < 1e-100
