import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bdfvac.dispersion import ModelParams, free_dispersion, solve_dispersion
from bdfvac.numerics import InvalidParameterError, ShapeMismatchError, make_grid
from bdfvac.polarization import (
    K_SWITCH,
    b_lambda_k,
    b_lambda_k_raw,
    b_lambda_zero_radial,
    b_screening,
    charge_renormalization,
    continuity_modulus,
    default_k_nodes,
    free_polarization_table,
    kernel_difference_bound_check,
    linear_response_density,
    polarization_table,
    screened_density,
    table_to_csv,
)

ALPHA = 0.01
CUTOFF = 1e4


@pytest.fixture(scope="module")
def dressed():
    return solve_dispersion(ModelParams(ALPHA, CUTOFF))


@pytest.fixture(scope="module")
def free():
    return free_dispersion(ModelParams(ALPHA, CUTOFF), make_grid(CUTOFF, 512, "geometric"))


@pytest.fixture(scope="module")
def table(dressed):
    return polarization_table(dressed)


class TestZeroMomentumValue:
    def test_free_log_growth_window(self, free):
        B0 = b_lambda_zero_radial(free)
        ratio = B0 * 3.0 * math.pi / (2.0 * math.log(CUTOFF))
        assert 0.75 <= ratio <= 1.25

    def test_free_log_growth_ratio_monotone_in_cutoff(self):
        ratios = []
        for cut in (1e2, 1e3, 1e4, 1e6):
            d = free_dispersion(ModelParams(ALPHA, cut), make_grid(cut, 512, "geometric"))
            ratios.append(b_lambda_zero_radial(d) * 3.0 * math.pi / (2.0 * math.log(cut)))
        assert all(b > a for a, b in zip(ratios, ratios[1:]))
        assert all(r < 1.0 for r in ratios)

    def test_dressed_positive_and_log_bounded(self, dressed):
        B0 = b_lambda_zero_radial(dressed)
        assert 0.0 < B0 <= 2.0 * math.log(CUTOFF)


class TestCrossMethodConsistency:
    def test_small_k_integral_matches_radial_form_free(self, free):
        B0 = b_lambda_zero_radial(free)
        Bk = b_lambda_k(free, 1e-2)
        assert abs(Bk / B0 - 1.0) < 0.02

    def test_small_k_integral_matches_radial_form_dressed(self, dressed):
        B0 = b_lambda_zero_radial(dressed)
        Bk = b_lambda_k(dressed, 1e-2)
        assert abs(Bk / B0 - 1.0) < 0.02

    def test_wedge_equals_raw_at_moderate_k(self, dressed):
        w = b_lambda_k(dressed, 1.0)
        r = b_lambda_k_raw(dressed, 1.0)
        assert abs(w - r) / w < 1e-8

    def test_vanishes_at_support_edge(self, dressed):
        assert b_lambda_k(dressed, 2.0 * CUTOFF) == pytest.approx(0.0, abs=1e-12)


class TestScreening:
    def test_closed_form(self):
        assert math.isclose(b_screening(2.0, 0.5), 0.5, rel_tol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(
        B=st.floats(min_value=0.0, max_value=1e6),
        alpha=st.floats(min_value=1e-6, max_value=1.2),
    )
    def test_algebra_and_range(self, B, alpha):
        b = b_screening(B, alpha)
        assert 0.0 <= b < 1.0
        # invert: b/(1-b) = alpha B
        assert math.isclose(b / (1.0 - b), alpha * B, rel_tol=1e-9, abs_tol=1e-12)

    def test_validation(self):
        with pytest.raises(InvalidParameterError):
            b_screening(-1.0, 0.1)
        with pytest.raises(InvalidParameterError):
            b_screening(1.0, 0.0)


class TestTable:
    def test_nonnegative_and_bounded(self, table):
        assert np.all(table.B >= 0.0)
        assert np.all(table.b >= 0.0)
        assert np.all(table.b < 1.0)

    def test_small_k_uses_zero_momentum_value(self, table):
        mask = table.k_nodes < K_SWITCH
        assert np.all(table.B[mask] == table.B0_at_zero)

    def test_free_table_kind(self):
        t = free_polarization_table(ModelParams(ALPHA, 100.0), n_momentum_nodes=128)
        assert t.dispersion_kind == "free"
        assert np.all(t.B >= 0.0)

    def test_default_k_nodes_span(self):
        k = default_k_nodes(CUTOFF)
        assert k[0] == pytest.approx(1e-4)
        assert k[-1] == pytest.approx(2.0 * CUTOFF)

    def test_csv_deterministic(self, table, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        table_to_csv(table, a, tmp_path / "a.json")
        table_to_csv(table, b)
        assert a.read_bytes() == b.read_bytes()


class TestContinuity:
    def test_modulus_bounded(self, table):
        rep = continuity_modulus(table)
        assert rep.max_ratio <= 10.0

    def test_report_serializes(self, table):
        d = continuity_modulus(table).to_dict()
        assert "max_ratio" in d


class TestPointwiseKernelBound:
    def test_no_violations_dressed(self, dressed):
        rep = kernel_difference_bound_check(dressed, 100, seed=0)
        assert rep.violations == 0

    def test_no_violations_free(self, free):
        rep = kernel_difference_bound_check(free, 100, seed=3)
        assert rep.violations == 0


class TestChargeRenormalization:
    def test_value_and_reduction(self, free):
        B0 = b_lambda_zero_radial(free)
        Z3, alpha_phys = charge_renormalization(ModelParams(ALPHA, CUTOFF), B0)
        assert math.isclose(Z3, 1.0 / (1.0 + ALPHA * B0), rel_tol=1e-14)
        assert 0.0 < alpha_phys < ALPHA

    def test_self_computes_free_value(self):
        Z3, _ = charge_renormalization(ModelParams(ALPHA, 100.0))
        assert 0.0 < Z3 < 1.0


class TestLinearResponse:
    def test_linearity_and_sign(self, table):
        rho = 1.0 / (1.0 + table.k_nodes**2)
        r1 = linear_response_density(table, rho)
        r2 = linear_response_density(table, 2.0 * rho)
        assert np.array_equal(r2, 2.0 * r1)
        assert np.all(r1 <= 0.0)

    def test_screened_density_fraction(self, table):
        n = np.ones_like(table.k_nodes)
        s = screened_density(table, n)
        assert np.array_equal(s, -table.b)

    def test_shape_validation(self, table):
        with pytest.raises(ShapeMismatchError):
            linear_response_density(table, np.ones(3))
