"""SVG line plots of entropy against ln N."""

import logging
from collections.abc import Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from entroscale.core.errors import OutputError  # noqa: E402
from entroscale.schemas.scan import ScanResult  # noqa: E402
from entroscale.schemas.sweep import SweepRow  # noqa: E402
from entroscale.services.numeric_core import linear_fit  # noqa: E402
from entroscale.storage.tables import ensure_dir  # noqa: E402

logger = logging.getLogger(__name__)

# fixed ids and no timestamp keep the SVG byte-stable
SVG_RC = {"svg.hashsalt": "entroscale", "svg.fonttype": "path"}
SVG_METADATA = {"Date": None, "Creator": "entroscale"}

SERIES_STYLE = {
    "fixed": {"color": "tab:blue", "marker": "o"},
    "entropy_preserving": {"color": "tab:orange", "marker": "s"},
}


def _save(fig: plt.Figure, path: Path) -> Path:
    ensure_dir(path.parent)
    try:
        fig.savefig(path, format="svg", metadata=SVG_METADATA)
    except OSError as exc:
        raise OutputError(path, exc.strerror or str(exc)) from exc
    finally:
        plt.close(fig)
    logger.info("Wrote %s", path)
    return path


def write_scan_svg(path: Path, results: Sequence[ScanResult]) -> Path:
    """Mean entropy vs ln N for each scan, with its fitted line."""
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        for result in results:
            style = SERIES_STYLE.get(result.policy, {})
            xs = np.array([row.ln_n for row in result.rows])
            ys = np.array([row.mean_entropy for row in result.rows])
            ax.plot(xs, ys, linestyle="none", label=result.policy, **style)
            ax.plot(
                xs,
                result.slope * xs + result.intercept,
                color=style.get("color"),
                linewidth=1,
                label=f"fit slope={result.slope:.3f}",
            )
        ax.set_xlabel("ln N")
        ax.set_ylabel("mean attention entropy (nats)")
        ax.legend(loc="upper left")
        fig.tight_layout()
        return _save(fig, path)


def write_sweep_svg(path: Path, rows: Sequence[SweepRow]) -> Path:
    """Trained-denoiser entropy per policy across sampling resolutions."""
    with plt.rc_context(SVG_RC):
        fig, (ent_ax, gap_ax) = plt.subplots(1, 2, figsize=(9, 4))
        for policy in sorted({row.policy for row in rows}):
            series = sorted(
                (r for r in rows if r.policy == policy), key=lambda r: r.ln_n
            )
            style = SERIES_STYLE.get(policy, {})
            xs = np.array([r.ln_n for r in series])
            ys = np.array([r.mean_entropy for r in series])
            ent_ax.plot(xs, ys, label=policy, **style)
            if len(set(xs.tolist())) >= 2:
                fit = linear_fit(xs, ys)
                ent_ax.plot(
                    xs,
                    fit.predict(xs),
                    color=style.get("color"),
                    linestyle="--",
                    linewidth=1,
                )
            gap_ax.plot(xs, [r.mean_gap for r in series], label=policy, **style)
        ent_ax.set_xlabel("ln N")
        ent_ax.set_ylabel("mean attention entropy (nats)")
        gap_ax.set_xlabel("ln N")
        gap_ax.set_ylabel("mean gap to training resolution")
        ent_ax.legend(loc="upper left")
        fig.tight_layout()
        return _save(fig, path)
