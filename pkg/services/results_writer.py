import io
import logging
import os
import tempfile
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from core.config import settings

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def write_text_atomic(path: PathLike, text: str) -> Path:
    """Write through a temporary file in the same directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(handle, "w", encoding="utf-8", newline="\n") as tmp:
            tmp.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.info(f"Wrote {path}")
    return path


def frame_to_csv(frame: pd.DataFrame) -> str:
    """CSV text with lossless 17-significant-digit floats."""
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format=settings.CSV_FLOAT_FORMAT, na_rep="nan", lineterminator="\n")
    return buffer.getvalue()


def write_csv(path: PathLike, frame: pd.DataFrame) -> Path:
    return write_text_atomic(path, frame_to_csv(frame))


def write_density(path: PathLike, grid: NDArray[np.float64], tau: float, subset: str) -> Path:
    """Row-major n_w x n_q grid preceded by a `# tau=... subset=... n_w=... n_q=...` line."""
    n_w, n_q = grid.shape
    lines = [f"# tau={tau:.17g} subset={subset} n_w={n_w} n_q={n_q}"]
    lines += [",".join(f"{value:.17g}" for value in row) for row in grid]
    return write_text_atomic(path, "\n".join(lines) + "\n")
