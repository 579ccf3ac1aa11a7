import math

import numpy as np
import pytest

from bdfvac.numerics import InvalidParameterError, make_grid
from bdfvac.pekar import (
    GAUSSIAN_BOUND,
    GAUSSIAN_SIGMA_STAR,
    PekarConvergenceError,
    direct_energy,
    el_residual,
    gaussian_state,
    gaussian_trial_energy,
    hartree_potential,
    imaginary_time_step,
    kinetic_energy,
    make_state,
    normalize,
    solve_pekar,
    state_to_csv,
)


@pytest.fixture(scope="module")
def grid():
    return make_grid(40.0, 1024, "uniform")


@pytest.fixture(scope="module")
def minimizer(grid):
    return solve_pekar(grid)


class TestGaussianOracles:
    def test_trial_energy_closed_form(self):
        # 3/(2 s^2) - sqrt(2/pi)/s, minimized value -1/(3 pi)
        assert math.isclose(
            gaussian_trial_energy(GAUSSIAN_SIGMA_STAR), GAUSSIAN_BOUND, rel_tol=1e-14
        )
        assert gaussian_trial_energy(1.0) > GAUSSIAN_BOUND

    def test_grid_kinetic_matches_analytic(self, grid):
        sigma = 2.0
        phi = normalize(grid, np.exp(-grid.nodes**2 / (2.0 * sigma**2)))
        T = kinetic_energy(grid, phi)
        assert math.isclose(T, 1.5 / sigma**2, rel_tol=5e-4)

    def test_grid_direct_matches_analytic(self, grid):
        sigma = 2.0
        phi = normalize(grid, np.exp(-grid.nodes**2 / (2.0 * sigma**2)))
        D = direct_energy(grid, phi**2)
        assert math.isclose(D, math.sqrt(2.0 / math.pi) / sigma, rel_tol=1e-4)

    def test_direct_energy_monte_carlo_oracle(self, grid):
        # E[1/|x-y|] for x, y iid isotropic Gaussians of std a equals
        # 1/(a sqrt(pi)); the density is |phi|^2 with phi of width a sqrt 2
        a = 1.5
        rng = np.random.default_rng(42)
        x = rng.normal(scale=a, size=(200_000, 3))
        y = rng.normal(scale=a, size=(200_000, 3))
        mc = float(np.mean(1.0 / np.linalg.norm(x - y, axis=1)))
        phi = normalize(grid, np.exp(-grid.nodes**2 / (4.0 * a**2)))
        D = direct_energy(grid, phi**2)
        assert math.isclose(D, mc, rel_tol=5e-3)
        assert math.isclose(D, 1.0 / (a * math.sqrt(math.pi)), rel_tol=1e-4)

    def test_gaussian_state_energy(self, grid):
        st = gaussian_state(grid)
        assert math.isclose(st.E, GAUSSIAN_BOUND, rel_tol=1e-4)

    def test_sigma_validation(self):
        with pytest.raises(InvalidParameterError):
            gaussian_trial_energy(-1.0)


class TestHartreePotential:
    def test_uniform_ball_oracle(self, grid):
        # V(r) = (3 R^2 - r^2)/(2 R^3) inside, 1/r outside, unit charge
        R = 5.0
        r = grid.nodes
        n = np.where(r <= R, 1.0, 0.0) / (4.0 / 3.0 * math.pi * R**3)
        V = hartree_potential(grid, n)
        inside = r < R - 0.5
        outside = r > R + 0.5
        exact_in = (3.0 * R**2 - r[inside] ** 2) / (2.0 * R**3)
        assert np.allclose(V[inside], exact_in, rtol=1e-3)
        assert np.allclose(V[outside], 1.0 / r[outside], rtol=1e-3)

    def test_rejects_negative_density(self, grid):
        n = np.ones(grid.n_points)
        n[3] = -1.0
        with pytest.raises(InvalidParameterError):
            hartree_potential(grid, n)

    def test_direct_energy_positive(self, grid):
        n = np.exp(-grid.nodes)
        assert direct_energy(grid, n) > 0.0


class TestDescent:
    def test_explicit_step_decreases_energy(self, grid):
        st = gaussian_state(grid)
        for _ in range(5):
            new = imaginary_time_step(st, 1e-4)
            assert new.E <= st.E + 1e-13
            st = new

    def test_step_validation(self, grid):
        with pytest.raises(InvalidParameterError):
            imaginary_time_step(gaussian_state(grid), -1.0)

    def test_nonuniform_grid_rejected(self):
        g = make_grid(50.0, 64, "geometric")
        with pytest.raises(InvalidParameterError):
            kinetic_energy(g, np.ones(64))


class TestMinimizer:
    def test_beats_gaussian_bound(self, minimizer):
        assert minimizer.E <= GAUSSIAN_BOUND + 1e-4

    def test_virial(self, minimizer):
        assert abs(minimizer.D - 2.0 * minimizer.T) / minimizer.D <= 1e-3

    def test_el_residual(self, minimizer):
        assert el_residual(minimizer) <= 1e-6

    def test_multiplier_consistency(self, minimizer):
        assert math.isclose(minimizer.mu, minimizer.T - 2.0 * minimizer.D, rel_tol=1e-12)
        assert minimizer.mu < 0.0

    def test_profile_nonnegative_normalized(self, minimizer):
        assert np.all(minimizer.phi >= 0.0)
        phi2 = minimizer.phi**2 * minimizer.grid.nodes**2
        mass = 4.0 * math.pi * float(np.dot(minimizer.grid.weights, phi2))
        assert math.isclose(mass, 1.0, rel_tol=1e-12)

    def test_grid_doubling_stability(self, minimizer):
        st2 = solve_pekar(make_grid(40.0, 2048, "uniform"))
        assert abs(st2.E - minimizer.E) < 1e-3

    def test_box_doubling_stability(self, minimizer):
        st2 = solve_pekar(make_grid(80.0, 2048, "uniform"))
        assert abs(st2.E - minimizer.E) < 1e-3

    def test_init_independence(self, grid, minimizer):
        phi = np.exp(-grid.nodes / 3.0)
        st2 = solve_pekar(grid, init=make_state(grid, phi))
        assert abs(st2.E - minimizer.E) < 1e-8

    def test_small_box_rejected(self):
        with pytest.raises(InvalidParameterError):
            solve_pekar(make_grid(10.0, 256, "uniform"))

    def test_iteration_budget_failure(self, grid):
        with pytest.raises(PekarConvergenceError):
            solve_pekar(grid, tol=1e-14, max_iter=5)

    def test_gaussian_profile_is_not_stationary(self, grid):
        assert el_residual(gaussian_state(grid)) > 1e-2


class TestSerialization:
    def test_csv_and_summary(self, minimizer, tmp_path):
        csv1, csv2 = tmp_path / "a.csv", tmp_path / "b.csv"
        state_to_csv(minimizer, csv1, tmp_path / "s.json")
        state_to_csv(minimizer, csv2)
        assert csv1.read_bytes() == csv2.read_bytes()
        import json

        summary = json.loads((tmp_path / "s.json").read_text())
        assert summary["E"] == minimizer.E
        assert summary["residual"] <= 1e-6
