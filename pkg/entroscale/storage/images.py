import logging
from pathlib import Path

import numpy as np
import numpy.typing as npt

from entroscale.core.errors import OutputError
from entroscale.storage.tables import ensure_dir

logger = logging.getLogger(__name__)

MAX_GRAY = 255
VALUES_PER_LINE = 16


def to_gray(image: npt.ArrayLike) -> npt.NDArray[np.int64]:
    """Map [-1, 1] to [0, 255], clipping anything outside."""
    values = np.clip(np.asarray(image, dtype=np.float64), -1.0, 1.0)
    return np.rint((values + 1.0) * (MAX_GRAY / 2)).astype(np.int64)


def write_pgm(path: Path, image: npt.ArrayLike) -> Path:
    """Plain (P2) portable graymap of a 2-D image."""
    gray = to_gray(image)
    if gray.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {gray.shape}")
    height, width = gray.shape

    lines = ["P2", f"{width} {height}", str(MAX_GRAY)]
    flat = gray.reshape(-1).tolist()
    for start in range(0, len(flat), VALUES_PER_LINE):
        lines.append(" ".join(str(v) for v in flat[start : start + VALUES_PER_LINE]))

    ensure_dir(path.parent)
    try:
        path.write_bytes(("\n".join(lines) + "\n").encode("ascii"))
    except OSError as exc:
        raise OutputError(path, exc.strerror or str(exc)) from exc
    logger.info("Wrote %s (%dx%d)", path, height, width)
    return path
