# csv_files.py

import logging
import re
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from farfield_doa.errors import CsvFormatError
from farfield_doa.measurement import MEASUREMENT_KINDS, MODELS, MeasurementVector

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
MEASUREMENT_COLUMNS = ["pair_i", "pair_j", "kind", "model", "value", "unit_mode"]


def write_frame(frame: pd.DataFrame, path: Optional[Path]):
    """Write a CSV with round-trip float precision; path None means standard output."""
    if path is None:
        frame.to_csv(sys.stdout, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Wrote {len(frame)} rows to {path}")


def read_frame(path: Path, expected_columns: Optional[Sequence[str]] = None) -> pd.DataFrame:
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise CsvFormatError(str(e), path=path, line=int(match.group(1)) if match else None)
    except pd.errors.EmptyDataError:
        raise CsvFormatError("file is empty", path=path)
    if expected_columns is not None and list(frame.columns) != list(expected_columns):
        raise CsvFormatError(f"expected header {','.join(expected_columns)}, found {','.join(frame.columns)}",
                             path=path, line=1)
    return frame


def _parse_float(value: str, path: Path, line: int, field: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise CsvFormatError(f"expected a number, got {value!r}", path=path, line=line, field=field)


def _parse_int(value: str, path: Path, line: int, field: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise CsvFormatError(f"expected an integer, got {value!r}", path=path, line=line, field=field)


def write_measurements(m: MeasurementVector, path: Optional[Path]):
    frame = pd.DataFrame({
        "pair_i": [i + 1 for i, _ in m.pairs],
        "pair_j": [j + 1 for _, j in m.pairs],
        "kind": m.kind,
        "model": m.model,
        "value": m.values,
        "unit_mode": m.unit_mode,
    }, columns=MEASUREMENT_COLUMNS)
    write_frame(frame, path)


def read_measurements(path: Path) -> MeasurementVector:
    path = Path(path)
    logger.info(f"Reading measurements from {path}")
    frame = read_frame(path, MEASUREMENT_COLUMNS)
    if frame.empty:
        raise CsvFormatError("no measurement rows", path=path)

    pairs, values = [], []
    kinds, models, unit_modes = set(), set(), set()
    for index, row in frame.iterrows():
        line = index + 2
        i = _parse_int(row["pair_i"], path, line, "pair_i")
        j = _parse_int(row["pair_j"], path, line, "pair_j")
        if i < 1 or j < 1 or i == j:
            raise CsvFormatError(f"invalid pair ({i}, {j})", path=path, line=line, field="pair_i")
        if row["kind"] not in MEASUREMENT_KINDS:
            raise CsvFormatError(f"unknown kind {row['kind']!r}", path=path, line=line, field="kind")
        if row["model"] not in MODELS:
            raise CsvFormatError(f"unknown model {row['model']!r}", path=path, line=line, field="model")
        if row["unit_mode"] not in ("scaled", "physical"):
            raise CsvFormatError(f"unknown unit mode {row['unit_mode']!r}", path=path, line=line,
                                 field="unit_mode")
        pairs.append((i - 1, j - 1))
        values.append(_parse_float(row["value"], path, line, "value"))
        kinds.add(row["kind"])
        models.add(row["model"])
        unit_modes.add(row["unit_mode"])

    if len(kinds) != 1 or len(models) != 1 or len(unit_modes) != 1:
        raise CsvFormatError("a measurement file must hold a single kind, model and unit mode", path=path)
    return MeasurementVector(kind=kinds.pop(), values=np.array(values), pairs=tuple(pairs),
                             model=models.pop(), unit_mode=unit_modes.pop())


def write_estimates(rows: List[Dict], path: Optional[Path]):
    write_frame(pd.DataFrame(rows), path)


def read_fixes(path: Path) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Read bearing fixes with header cx,cy(,cz),dx,dy(,dz)."""
    path = Path(path)
    frame = read_frame(path)
    columns = list(frame.columns)
    if columns == ["cx", "cy", "dx", "dy"]:
        dim = 2
    elif columns == ["cx", "cy", "cz", "dx", "dy", "dz"]:
        dim = 3
    else:
        raise CsvFormatError(f"expected header cx,cy(,cz),dx,dy(,dz), found {','.join(columns)}",
                             path=path, line=1)

    fixes = []
    for index, row in frame.iterrows():
        line = index + 2
        values = np.array([_parse_float(row[c], path, line, c) for c in columns])
        if not np.all(np.isfinite(values)):
            raise CsvFormatError("non-finite value", path=path, line=line)
        direction = values[dim:]
        norm = np.linalg.norm(direction)
        if norm == 0.0:
            raise CsvFormatError("direction is the zero vector", path=path, line=line, field="dx")
        fixes.append((values[:dim], direction / norm))
    logger.info(f"Read {len(fixes)} fixes from {path}")
    return fixes


def write_fixes(fixes: Sequence[Tuple[np.ndarray, np.ndarray]], path: Optional[Path]):
    dim = len(fixes[0][0])
    axes = "xyz"[:dim]
    rows = [dict(zip([f"c{a}" for a in axes] + [f"d{a}" for a in axes],
                     np.concatenate([center, direction])))
            for center, direction in fixes]
    write_frame(pd.DataFrame(rows, columns=[f"c{a}" for a in axes] + [f"d{a}" for a in axes]), path)


def write_locus(samples: np.ndarray, pairs: Sequence[Tuple[int, int]], prefix: str, path: Optional[Path]):
    columns = [f"{prefix}_{i + 1}_{j + 1}" for i, j in pairs]
    write_frame(pd.DataFrame(np.asarray(samples), columns=columns), path)
