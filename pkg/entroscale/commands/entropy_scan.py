import logging

from entroscale.commands import SCAN_STREAM, Command, reference_queries, stream
from entroscale.core.config import ExperimentConfig
from entroscale.core.errors import ExitCode
from entroscale.schemas.scan import ScanResult, ScanRow
from entroscale.services import entropy_theory
from entroscale.services.attention import ScalePolicy
from entroscale.storage.plots import write_scan_svg
from entroscale.storage.tables import write_csv

logger = logging.getLogger(__name__)


def run_scans(config: ExperimentConfig) -> tuple[ScanResult, ScanResult]:
    """Fixed and entropy-preserving scans over the same queries and key draws."""
    rng = stream(config, SCAN_STREAM)
    model = entropy_theory.reference_model(config.d_token, config.d_proj)
    q = reference_queries(config, rng.child(0))
    keys_rng = rng.child(1)

    results = []
    for policy in (
        ScalePolicy.fixed(),
        ScalePolicy.entropy_preserving(config.train_tokens),
    ):
        logger.info("Scanning %d sizes under %s", len(config.scan_sizes), policy.name)
        result = entropy_theory.entropy_log_n_scan(
            model, q, policy, config.d_key, config.scan_sizes, config.trials, keys_rng
        )
        logger.info(result.fit_summary().lstrip("# "))
        results.append(result)
    fixed, scaled = results
    return fixed, scaled


def entropy_scan(config: ExperimentConfig) -> int:
    fixed, scaled = run_scans(config)
    out = config.output_dir
    for name, result in (("scan_fixed.csv", fixed), ("scan_scaled.csv", scaled)):
        write_csv(out / name, ScanRow, result.rows, footer=result.fit_summary())
    write_scan_svg(out / "scan.svg", [fixed, scaled])
    print(
        f"entropy-scan: fixed slope {fixed.slope:.4f} (r2 {fixed.r_squared:.5f}), "
        f"scaled slope {scaled.slope:.4f} (r2 {scaled.r_squared:.5f})"
    )
    return ExitCode.OK


command = Command(
    name="entropy-scan",
    help="Mean attention entropy against ln N under both scaling policies",
    handler=entropy_scan,
)
