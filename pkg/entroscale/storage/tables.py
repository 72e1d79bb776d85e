"""CSV tables rendered from pydantic rows.

Numbers use fixed 17-significant-digit rendering and lines end in '\\n', so
identical inputs give identical bytes on every platform.
"""

import csv
import logging
from collections.abc import Sequence
from pathlib import Path

from pydantic import BaseModel

from entroscale.core.errors import OutputError

logger = logging.getLogger(__name__)


def format_value(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def columns_of(model: type[BaseModel]) -> list[str]:
    """Header names, using field aliases where a model declares them."""
    return [field.alias or name for name, field in model.model_fields.items()]


def ensure_dir(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(path, exc.strerror or str(exc)) from exc


def write_csv(
    path: Path,
    model: type[BaseModel],
    rows: Sequence[BaseModel],
    footer: str | None = None,
) -> Path:
    """Write `rows` under a header from `model`, then `footer` as a last line."""
    header = columns_of(model)
    ensure_dir(path.parent)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                values = row.model_dump(by_alias=True)
                writer.writerow([format_value(values[column]) for column in header])
            if footer is not None:
                fh.write(footer.rstrip("\n") + "\n")
    except OSError as exc:
        raise OutputError(path, exc.strerror or str(exc)) from exc
    logger.info("Wrote %s (%d rows)", path, len(rows))
    return path
