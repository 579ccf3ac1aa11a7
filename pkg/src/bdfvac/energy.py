"""Assembly of the closed-form ground-state energy expansion.

Combines the dressed dispersion (m = g0(0), slope g1'(0)), the screening
fraction b(0) from the polarization table, and the unit-scale variational
minimizer (kinetic T, direct D, E_CP = T - D) into the predicted one-
particle energy

    E_pred = m + C0^{-2} * E_CP,   C0^{-2} = (alpha b(0))^2 m / (2 g1'(0)^2).

All length-scale factors are applied analytically through the prefactors;
the variational profile itself is never resampled.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

from .dispersion import Dispersion, ModelParams, g1_prime_zero, m_alpha, solve_dispersion
from .numerics import InvalidParameterError, make_grid
from .pekar import PekarState, solve_pekar
from .polarization import PolarizationTable, b_screening, polarization_table

CUTOFF_CAP = 1e8
EXCHANGE_BUDGET_FRACTION = 0.1


@dataclass(frozen=True)
class EnergyBreakdown:
    """All scalars of the assembled expansion.

    kinetic_corr, vacuum_corr and direct_corr sum exactly to
    C0^{-2} * (T - D); exchange_bound is a reported error budget of
    EXCHANGE_BUDGET_FRACTION * alpha*b(0)/lambda and is never added to
    the total.
    """

    m: float
    lambda_inv: float
    tau: float
    kinetic_corr: float
    vacuum_corr: float
    direct_corr: float
    exchange_bound: float
    total_pred: float
    C0_sq: float
    b0: float
    g1_slope: float
    E_CP: float

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "lambda_inv": self.lambda_inv,
            "tau": self.tau,
            "kinetic_corr": self.kinetic_corr,
            "vacuum_corr": self.vacuum_corr,
            "direct_corr": self.direct_corr,
            "exchange_bound": self.exchange_bound,
            "total_pred": self.total_pred,
            "C0_sq": self.C0_sq,
            "b0": self.b0,
            "g1_slope": self.g1_slope,
            "E_CP": self.E_CP,
        }


def _check_params(d: Dispersion, t: PolarizationTable) -> None:
    if d.params != t.params:
        raise InvalidParameterError(
            "dispersion and polarization table were built from different parameters"
        )


def _ingredients(d: Dispersion, t: PolarizationTable):
    m = m_alpha(d)
    g1p = g1_prime_zero(d)
    alpha = d.params.alpha
    b0 = b_screening(t.B0_at_zero, alpha) if alpha > 0 else 0.0
    return m, g1p, alpha, b0


def scaling_lambda(d: Dispersion, t: PolarizationTable) -> float:
    """Reciprocal length scale lambda^{-1} = alpha * b(0) * m / g1'(0)^2.

    Zero at alpha = 0 (no screening, no binding scale).
    """
    _check_params(d, t)
    m, g1p, alpha, b0 = _ingredients(d, t)
    return alpha * b0 * m / g1p**2


def c0_squared(d: Dispersion, t: PolarizationTable) -> float:
    """Normalization constant C0^2 = 2 g1'(0)^2 / ((alpha b(0))^2 m).

    Infinite at alpha = 0; its reciprocal scales E_CP in the prediction.
    """
    _check_params(d, t)
    m, g1p, alpha, b0 = _ingredients(d, t)
    if alpha * b0 == 0.0:
        return math.inf
    return 2.0 * g1p**2 / ((alpha * b0) ** 2 * m)


def predicted_ground_energy(d: Dispersion, t: PolarizationTable, E_CP: float) -> float:
    """m + C0^{-2} * E_CP; warns when E_CP >= 0 (no binding predicted)."""
    _check_params(d, t)
    if E_CP >= 0:
        warnings.warn("E_CP >= 0: no binding predicted", stacklevel=2)
    c0sq = c0_squared(d, t)
    m = m_alpha(d)
    if math.isinf(c0sq):
        return m
    return m + E_CP / c0sq


def assemble_breakdown(
    d: Dispersion, t: PolarizationTable, p: PekarState
) -> EnergyBreakdown:
    """Full component breakdown of the predicted energy.

    The three correction terms carry the exact algebraic split of
    C0^{-2}(T - D): kinetic_corr = C0^{-2} T, while the potential part
    splits into a positive vacuum-polarization cost alpha(b-b^2)D/(2 lambda)
    and a larger negative screening gain -alpha(2b-b^2)D/(2 lambda).
    """
    _check_params(d, t)
    m, g1p, alpha, b0 = _ingredients(d, t)
    lam_inv = alpha * b0 * m / g1p**2
    tau = alpha * b0
    T, D = p.T, p.D
    if tau == 0.0:
        kinetic = vacuum = direct = exch = 0.0
        c0sq = math.inf
        total = m
    else:
        kinetic = g1p**2 * T * lam_inv**2 / (2.0 * m)
        vacuum = alpha * (b0 - b0**2) * D * lam_inv / 2.0
        direct = -alpha * (2.0 * b0 - b0**2) * D * lam_inv / 2.0
        exch = EXCHANGE_BUDGET_FRACTION * tau * lam_inv
        c0sq = 2.0 * g1p**2 / (tau**2 * m)
        total = m + p.E / c0sq
    return EnergyBreakdown(
        m=m,
        lambda_inv=lam_inv,
        tau=tau,
        kinetic_corr=kinetic,
        vacuum_corr=vacuum,
        direct_corr=direct,
        exchange_bound=exch,
        total_pred=total,
        C0_sq=c0sq,
        b0=b0,
        g1_slope=g1p,
        E_CP=p.E,
    )


SWEEP_COLUMNS = (
    "alpha",
    "cutoff",
    "m",
    "b0",
    "g1_slope",
    "lambda_inv",
    "C0_sq",
    "E_pred",
    "binding",
)


@dataclass(frozen=True)
class SweepTable:
    """Per-alpha rows at fixed L = alpha*ln(cutoff), plus skipped alphas
    whose derived cutoff exceeded the feasibility cap."""

    L: float
    rows: list
    skipped: list
    E_CP: float

    def to_dicts(self) -> list:
        return [dict(zip(SWEEP_COLUMNS, row)) for row in self.rows]


def regime_sweep(
    alphas,
    L_fixed: float,
    pekar_state: PekarState | None = None,
    n_nodes: int = 512,
) -> SweepTable:
    """Solve the pipeline for each alpha at cutoff = exp(L/alpha).

    The variational problem is alpha-independent and solved once.  Alphas
    whose derived cutoff exceeds CUTOFF_CAP are recorded in `skipped`
    rather than solved.  Row columns: SWEEP_COLUMNS, where binding is
    m - E_pred (positive when E_CP < 0).
    """
    if L_fixed <= 0:
        raise InvalidParameterError("L must be positive")
    if pekar_state is None:
        pekar_state = solve_pekar()
    rows = []
    skipped = []
    for alpha in alphas:
        if alpha <= 0:
            raise InvalidParameterError("sweep alphas must be positive")
        cutoff = math.exp(L_fixed / alpha)
        if cutoff > CUTOFF_CAP:
            skipped.append(float(alpha))
            continue
        params = ModelParams(alpha=float(alpha), cutoff=cutoff)
        d = solve_dispersion(params, make_grid(cutoff, n_nodes, "geometric"))
        t = polarization_table(d, k_nodes=d.grid.nodes[:1])  # only B0_at_zero needed
        br = assemble_breakdown(d, t, pekar_state)
        rows.append(
            (
                float(alpha),
                cutoff,
                br.m,
                br.b0,
                br.g1_slope,
                br.lambda_inv,
                br.C0_sq,
                br.total_pred,
                br.m - br.total_pred,
            )
        )
    return SweepTable(L=float(L_fixed), rows=rows, skipped=skipped, E_CP=pekar_state.E)


def breakdown_to_json(br: EnergyBreakdown, path) -> None:
    with open(path, "w") as fh:
        json.dump(br.to_dict(), fh, indent=2)
        fh.write("\n")


def sweep_to_csv(table: SweepTable, path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(SWEEP_COLUMNS) + "\n")
        for row in table.rows:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def sweep_to_json(table: SweepTable, path) -> None:
    with open(path, "w") as fh:
        json.dump(
            {
                "L": table.L,
                "E_CP": table.E_CP,
                "rows": table.to_dicts(),
                "skipped_alphas": table.skipped,
            },
            fh,
            indent=2,
        )
        fh.write("\n")
