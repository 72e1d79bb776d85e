"""
verify-theory: check the entropy decomposition, the closed-form moments and
the ln N − σ²/2 law against independent oracles, and how closely the
population-moment form tracks exact entropy as N grows. Writes theory.csv.
"""

import logging

import numpy as np

from entroscale.commands import THEORY_STREAM, Command, reference_queries, stream
from entroscale.core.config import ExperimentConfig
from entroscale.core.errors import CheckFailure, ExitCode
from entroscale.schemas.theory import CheckRow
from entroscale.services import attention, entropy_theory
from entroscale.services.attention import ScalePolicy
from entroscale.services.entropy_theory import RowMoments
from entroscale.services.numeric_core import RngStream
from entroscale.storage.tables import write_csv

logger = logging.getLogger(__name__)

IDENTITY_TOL = 1e-9
MOMENT_TOL = 1e-8
LAW_MIN_TOL = 0.05
MAX_CASE_TOKENS = 512
CASE_WIDTH = 16
CONCENTRATION_SIZES = (64, 256, 1024, 4096)
CONCENTRATION_TOL = 0.05


def decomposition_suite(cases: int, rng: RngStream) -> list[CheckRow]:
    """Empirical-mean decomposition against exact entropy; reports the worst case."""
    worst: tuple[float, int, float, float] | None = None
    for case in range(cases):
        gen = rng.child(case).generator()
        n = int(gen.integers(1, MAX_CASE_TOKENS + 1))
        q = gen.standard_normal(CASE_WIDTH)
        keys = gen.standard_normal((n, CASE_WIDTH)) * gen.uniform(0.1, 2.0)
        lam = float(gen.uniform(0.0, 1.0))

        terms = entropy_theory.empirical_decomposition(q, keys, lam)
        error = abs(terms.decomposed_entropy - terms.exact_entropy) / max(
            1.0, abs(terms.exact_entropy)
        )
        if worst is None or error > worst[0]:
            worst = (error, n, terms.exact_entropy, terms.decomposed_entropy)

    assert worst is not None
    error, n, exact, decomposed = worst
    return [
        CheckRow(
            check_name="decomposition_identity",
            n=n,
            predicted=exact,
            measured=decomposed,
            passed=error <= IDENTITY_TOL,
        )
    ]


def moment_suite(grid: int) -> list[CheckRow]:
    """Closed-form E[e^y], E[y·e^y] against quadrature on a (μ, σ²) grid."""
    worst = {"exp_moment": (-1.0, 0.0, 0.0), "yexp_moment": (-1.0, 0.0, 0.0)}
    for mu in np.linspace(-3.0, 3.0, grid):
        for sigma2 in np.linspace(0.0, 4.0, grid):
            m = RowMoments(float(mu), float(sigma2))
            closed = entropy_theory.gaussian_exp_moments(m)
            quad = entropy_theory.quadrature_exp_moments(m)
            # both errors relative to E[e^y], which is bounded away from zero
            for name, c, qv in zip(worst, closed, quad):
                error = abs(c - qv) / closed[0]
                if error > worst[name][0]:
                    worst[name] = (error, c, qv)

    return [
        CheckRow(
            check_name=name,
            n=grid * grid,
            predicted=closed,
            measured=quad,
            passed=error <= MOMENT_TOL,
        )
        for name, (error, closed, quad) in worst.items()
    ]


def entropy_law_suite(config: ExperimentConfig, rng: RngStream) -> list[CheckRow]:
    """Monte Carlo row entropy against ln N − σ²/2 at each theory size."""
    model = entropy_theory.reference_model(config.d_token, config.d_proj)
    q = reference_queries(config, rng.child(0))
    kd = entropy_theory.key_distribution(model)
    # the fixed policy ignores N
    lam = attention.scale_factor(ScalePolicy.fixed(), 1, config.d_key)
    moments = [entropy_theory.row_moments(row, lam, kd) for row in q]

    rows = []
    for index, n in enumerate(config.theory_sizes):
        predicted = float(
            np.mean([entropy_theory.predicted_entropy(n, m) for m in moments])
        )
        estimate = entropy_theory.monte_carlo_entropy(
            model, q, n, lam, config.trials, rng.child(1).child(index)
        )
        tolerance = max(3 * estimate.stderr, LAW_MIN_TOL)
        rows.append(
            CheckRow(
                check_name="entropy_law",
                n=n,
                predicted=predicted,
                measured=estimate.mean,
                stderr=estimate.stderr,
                passed=abs(estimate.mean - predicted) <= tolerance,
            )
        )
    return rows


def concentration_suite(cases: int, rng: RngStream) -> list[CheckRow]:
    """
    Population-moment entropy against exact entropy as N grows.

    The median error must shrink at every size step, and the worst case at
    the largest size must stay within CONCENTRATION_TOL.
    """
    errors = entropy_theory.moment_concentration_errors(
        list(CONCENTRATION_SIZES), cases, CASE_WIDTH, rng
    )
    medians = {n: float(np.median(e)) for n, e in errors.items()}

    rows = [
        CheckRow(
            check_name="moment_concentration",
            n=n,
            predicted=medians[prev],
            measured=medians[n],
            passed=medians[n] < medians[prev],
        )
        for prev, n in zip(CONCENTRATION_SIZES, CONCENTRATION_SIZES[1:])
    ]
    largest = CONCENTRATION_SIZES[-1]
    worst = float(errors[largest].max())
    rows.append(
        CheckRow(
            check_name="moment_concentration_max",
            n=largest,
            predicted=CONCENTRATION_TOL,
            measured=worst,
            passed=worst <= CONCENTRATION_TOL,
        )
    )
    return rows


def verify_theory(config: ExperimentConfig) -> int:
    rng = stream(config, THEORY_STREAM)
    logger.info("Verifying entropy theory (seed %d)", config.seed)

    rows = [
        *decomposition_suite(config.decomposition_cases, rng.child(0)),
        *moment_suite(config.quadrature_grid),
        *entropy_law_suite(config, rng.child(1)),
        *concentration_suite(config.concentration_cases, rng.child(2)),
    ]
    write_csv(config.output_dir / "theory.csv", CheckRow, rows)

    failed = [row for row in rows if not row.passed]
    for row in failed:
        logger.warning(
            "%s failed at n=%d: predicted %.6g, measured %.6g",
            row.check_name,
            row.n,
            row.predicted,
            row.measured,
        )
    print(f"verify-theory: {len(rows) - len(failed)}/{len(rows)} checks passed")
    if failed:
        raise CheckFailure(f"{len(failed)} of {len(rows)} theory checks failed")
    return ExitCode.OK


command = Command(
    name="verify-theory",
    help="Check the entropy decomposition, moment formulas and ln N law",
    handler=verify_theory,
)
