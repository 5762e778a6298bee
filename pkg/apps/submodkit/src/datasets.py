"""
Datasets and Kernels

Ingestion of numeric tables (CSV with a header row, or JSON arrays) and
construction of nonnegative similarity matrices from them.
"""

import json
from pathlib import Path
from typing import Any, Literal

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.spatial.distance import cdist

from .core import SubmodError
from .loaders import DocumentError, load_dense_csv
from .schemas import Matrix, SimilarityMatrix


class IngestError(SubmodError):
    """Dataset file could not be read into a numeric table."""
    pass


class KernelError(SubmodError):
    """Kernel cannot be built from the table."""
    pass


class DatasetTable(BaseModel):
    """Rectangular table of finite reals with one id per row."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    ids: list[str]
    columns: list[str]
    values: Matrix

    @model_validator(mode="after")
    def _check_shape(self) -> "DatasetTable":
        rows, cols = self.values.shape
        if rows != len(self.ids) or cols != len(self.columns):
            raise ValueError(
                f"table is {rows}x{cols} but has {len(self.ids)} ids, "
                f"{len(self.columns)} columns"
            )
        return self

    @property
    def size_n(self) -> int:
        return len(self.ids)

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise IngestError(f"no column '{name}' (have {', '.join(self.columns)})")
        return self.values[:, self.columns.index(name)]

    def drop(self, names: list[str]) -> "DatasetTable":
        keep = [i for i, c in enumerate(self.columns) if c not in names]
        if not keep:
            raise IngestError("no feature columns left")
        return DatasetTable(
            ids=self.ids,
            columns=[self.columns[i] for i in keep],
            values=self.values[:, keep],
        )

    def index_of(self, ids: list[str]) -> list[int]:
        lookup = {row_id: i for i, row_id in enumerate(self.ids)}
        missing = [row_id for row_id in ids if row_id not in lookup]
        if missing:
            raise IngestError(f"unknown ids: {', '.join(missing)}")
        return [lookup[row_id] for row_id in ids]


def _finite_frame(frame: pd.DataFrame, path: str | Path) -> np.ndarray:
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().to_numpy() | ~np.isfinite(numeric.to_numpy(dtype=float))
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise IngestError(
            f"{path}: row {row + 1}, column '{frame.columns[col]}' is missing, "
            f"non-numeric or non-finite ({frame.iat[row, col]!r})"
        )
    return numeric.to_numpy(dtype=float)


def _read_json_rows(path: Path) -> pd.DataFrame:
    try:
        data: Any = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise IngestError(f"cannot read JSON dataset {path}: {e}") from e
    if not isinstance(data, list) or not data:
        raise IngestError(f"{path}: expected a nonempty JSON array of rows")
    if all(isinstance(row, dict) for row in data):
        keys = list(data[0])
        for i, row in enumerate(data):
            if list(row) != keys:
                raise IngestError(f"{path}: row {i + 1} has keys {list(row)}, expected {keys}")
        return pd.DataFrame(data, columns=keys)
    width = len(data[0]) if isinstance(data[0], list) else -1
    for i, row in enumerate(data):
        if not isinstance(row, list) or len(row) != width:
            raise IngestError(f"{path}: row {i + 1} is ragged (expected {width} values)")
    return pd.DataFrame(data, columns=[f"x{j}" for j in range(width)])


def ingest(
    path: str | Path,
    fmt: Literal["csv", "json"] | None = None,
    id_column: str | None = None,
) -> DatasetTable:
    """
    Read a dataset; row order is preserved.

    Args:
        path: CSV with a header row, or JSON array of arrays / objects
        fmt: Format, inferred from the suffix when None
        id_column: Column holding row ids (row numbers when None)

    Raises:
        IngestError: On parse failures, ragged rows or non-finite cells
    """
    path = Path(path)
    fmt = fmt or ("json" if path.suffix.lower() == ".json" else "csv")
    if fmt == "json":
        frame = _read_json_rows(path)
    else:
        try:
            frame = pd.read_csv(path, skipinitialspace=True)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise IngestError(f"cannot parse CSV dataset {path}: {e}") from e
    if frame.empty:
        raise IngestError(f"{path}: dataset has no rows")

    if id_column is not None:
        if id_column not in frame.columns:
            raise IngestError(f"{path}: no id column '{id_column}'")
        ids = [str(v) for v in frame.pop(id_column)]
        if len(set(ids)) != len(ids):
            raise IngestError(f"{path}: ids in '{id_column}' are not unique")
    else:
        ids = [str(i) for i in range(len(frame))]

    values = _finite_frame(frame, path)
    logger.debug("ingested {} rows x {} columns from {}", *values.shape, path)
    return DatasetTable(ids=ids, columns=[str(c) for c in frame.columns], values=values)


# ============================================================================
# Kernels
# ============================================================================


class KernelSpec(BaseModel):
    """
    Similarity kernel over table rows.

    - rbf: exp(-d^2 / (2 h^2)) with bandwidth h
    - cosine: normalized inner products
    - dot: raw inner products
    - precomputed: dense CSV matrix read from ``path``
    """

    kind: Literal["rbf", "cosine", "dot", "precomputed"]
    bandwidth: float | None = Field(default=None, gt=0)
    path: str | None = None
    normalization: Literal["none", "clip_nonneg"] = "clip_nonneg"

    @model_validator(mode="after")
    def _check_parameters(self) -> "KernelSpec":
        if self.kind == "rbf" and self.bandwidth is None:
            raise ValueError("rbf kernel needs a bandwidth")
        if self.kind == "precomputed" and not self.path:
            raise ValueError("precomputed kernel needs a path")
        return self

    @classmethod
    def parse(cls, text: str, normalization: str = "clip_nonneg") -> "KernelSpec":
        """Parse ``rbf:1.0``, ``cosine``, ``dot`` or ``precomputed:sim.csv``."""
        kind, _, argument = text.partition(":")
        match kind:
            case "rbf":
                try:
                    bandwidth = float(argument)
                except ValueError as e:
                    raise KernelError(f"bad rbf bandwidth in '{text}'") from e
                return cls(kind="rbf", bandwidth=bandwidth, normalization=normalization)  # type: ignore[arg-type]
            case "precomputed":
                return cls(kind="precomputed", path=argument, normalization=normalization)  # type: ignore[arg-type]
            case "cosine" | "dot":
                return cls(kind=kind, normalization=normalization)  # type: ignore[arg-type]
        raise KernelError(f"unknown kernel '{text}'")


def build_kernel(t: DatasetTable, spec: KernelSpec) -> SimilarityMatrix:
    """
    Similarity matrix over the rows of ``t``.

    Raises:
        KernelError: Zero-norm rows under cosine, a precomputed matrix of the
            wrong shape, or negative entries with normalization "none"
    """
    X = t.values
    match spec.kind:
        case "rbf":
            bandwidth = spec.bandwidth or 1.0
            sim = np.exp(-cdist(X, X, "sqeuclidean") / (2.0 * bandwidth**2))
        case "cosine":
            norms = np.linalg.norm(X, axis=1)
            zero = np.flatnonzero(norms == 0)
            if zero.size:
                raise KernelError(f"cosine kernel: row '{t.ids[zero[0]]}' has zero norm")
            unit = X / norms[:, None]
            sim = unit @ unit.T
        case "dot":
            sim = X @ X.T
        case "precomputed":
            try:
                sim = load_dense_csv(spec.path or "")
            except DocumentError as e:
                raise KernelError(str(e)) from e
            if sim.shape != (t.size_n, t.size_n):
                raise KernelError(
                    f"precomputed kernel is {sim.shape}, table has {t.size_n} rows"
                )

    negative = int((sim < 0).sum())
    if negative:
        if spec.normalization != "clip_nonneg":
            raise KernelError(f"{spec.kind} kernel has {negative} negative entries")
        logger.warning("clipping {} negative {} kernel entries to 0", negative, spec.kind)
        sim = np.clip(sim, 0.0, None)
    return SimilarityMatrix(entries=sim)
