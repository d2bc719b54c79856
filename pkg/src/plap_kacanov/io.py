"""
Output files: convergence histories (CSV), solutions (legacy VTK) and run
manifests. Every file is written to a temporary sibling first and renamed
into place, so readers never see a half-written file.
"""

import csv
import logging
import math
import os
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, TextIO

import numpy as np

from .mesh import Mesh
from .records import FIELDS, ConvergenceRecord

logger = logging.getLogger(__name__)

INT_FIELDS = ("iteration", "ndof", "ndof_accumulated")


@contextmanager
def atomic_write(path: Path) -> Iterator[TextIO]:
    """Open ``path.tmp`` for writing and move it over ``path`` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as handle:
            yield handle
        os.replace(tmp, path)
    except BaseException:
        if tmp.exists():
            tmp.unlink()
        raise


def format_float(value: float) -> str:
    """17 significant digits, enough to round-trip any double; NaN as 'nan'."""
    value = float(value)
    if math.isnan(value):
        return "nan"
    return format(value, ".17g")


def _cells(record: ConvergenceRecord) -> List[str]:
    out = []
    for value in record.astuple():
        if isinstance(value, float):
            out.append(format_float(value))
        else:
            out.append(str(value))
    return out


def write_history_csv(path: Path, records: Iterable[ConvergenceRecord]) -> Path:
    """Write records with the fixed column order of :data:`FIELDS`."""
    with atomic_write(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(FIELDS)
        for record in records:
            writer.writerow(_cells(record))
    logger.debug("wrote %s", path)
    return Path(path)


def read_history_csv(path: Path) -> List[ConvergenceRecord]:
    """Parse a history written by :func:`write_history_csv`."""
    records = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != FIELDS:
            raise ValueError(f"{path} does not carry the history header")
        for row in reader:
            records.append(
                ConvergenceRecord(
                    iteration=int(row["iteration"]),
                    ndof=int(row["ndof"]),
                    ndof_accumulated=int(row["ndof_accumulated"]),
                    action=row["action"],
                    **{
                        name: float(row[name])
                        for name in FIELDS
                        if name not in INT_FIELDS and name != "action"
                    },
                )
            )
    return records


def write_vtk(
    path: Path,
    mesh: Mesh,
    point_data: Optional[Mapping[str, np.ndarray]] = None,
    cell_data: Optional[Mapping[str, np.ndarray]] = None,
    title: str = "plap-kacanov solution",
) -> Path:
    """Legacy VTK ASCII unstructured grid of triangles with scalar fields."""
    point_data = point_data or {}
    cell_data = cell_data or {}
    with atomic_write(path) as handle:
        handle.write("# vtk DataFile Version 3.0\n")
        handle.write(f"{title}\n")
        handle.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        handle.write(f"POINTS {mesh.n_vertices} double\n")
        for x, y in mesh.points:
            handle.write(f"{format_float(x)} {format_float(y)} 0\n")
        handle.write(f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}\n")
        for a, b, c in mesh.cells:
            handle.write(f"3 {a} {b} {c}\n")
        handle.write(f"CELL_TYPES {mesh.n_triangles}\n")
        handle.write("5\n" * mesh.n_triangles)
        _write_fields(handle, "POINT_DATA", mesh.n_vertices, point_data)
        _write_fields(handle, "CELL_DATA", mesh.n_triangles, cell_data)
    logger.debug("wrote %s", path)
    return Path(path)


def _write_fields(
    handle: TextIO, section: str, size: int, data: Mapping[str, np.ndarray]
) -> None:
    if not data:
        return
    handle.write(f"{section} {size}\n")
    for name, values in data.items():
        values = np.asarray(values)
        if values.shape != (size,):
            raise ValueError(f"{section} field '{name}' needs {size} values")
        kind = "int" if np.issubdtype(values.dtype, np.integer) else "double"
        handle.write(f"SCALARS {name} {kind} 1\nLOOKUP_TABLE default\n")
        if kind == "int":
            handle.writelines(f"{int(v)}\n" for v in values)
        else:
            handle.writelines(f"{format_float(v)}\n" for v in values)


def write_manifest(
    path: Path, lines: Sequence[str], comments: Optional[Dict[str, str]] = None
) -> Path:
    """Comment header followed by ``key = value`` lines."""
    with atomic_write(path) as handle:
        for key, value in (comments or {}).items():
            handle.write(f"# {key}: {value}\n")
        for line in lines:
            handle.write(f"{line}\n")
    return Path(path)
