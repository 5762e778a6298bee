"""
Spec Loaders

Reads similarity / edge-weight / kernel matrices from dense CSV or (i, j,
value) triplet CSV, and function documents from JSON or YAML. Function
documents are validated in stages, mirroring how the CLI reports problems:
each failure carries the stage, a machine-readable code and a message.
"""

import json
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import yaml
from packaging import version as pkg_version
from pydantic import ValidationError

from .core import GroundSet, SetFunctionHandle, SubmodError
from .schemas import (
    CURRENT_SCHEMA_VERSION,
    FunctionDocument,
    GraphCutSpec,
    LogDetSpec,
    SimilarityMatrix,
    SpecError,
)
from .zoo import build_function

DOCUMENT_MAX_SIZE = 50 * 1024 * 1024  # 50MB


class DocumentError(SubmodError):
    """Function document or matrix file could not be loaded."""

    def __init__(self, message: str, errors: list[dict[str, Any]] | None = None):
        super().__init__(message)
        self.errors = errors or []


# ============================================================================
# Matrices
# ============================================================================


def load_dense_csv(path: str | Path) -> np.ndarray:
    """
    Load a dense row-major matrix; a non-numeric first row is a header.

    Raises:
        DocumentError: If the file cannot be parsed or holds non-finite values
    """
    try:
        frame = pd.read_csv(path, header=None, dtype=str, skipinitialspace=True)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DocumentError(f"Cannot read matrix CSV {path}: {e}") from e

    numeric = frame.apply(pd.to_numeric, errors="coerce")
    if len(frame) and numeric.iloc[0].isna().all():
        numeric = numeric.iloc[1:]
    bad = numeric.isna()
    if bad.to_numpy().any():
        row, col = np.argwhere(bad.to_numpy())[0]
        raise DocumentError(
            f"Non-numeric entry in {path} at data row {row}, column {col}"
        )
    matrix = numeric.to_numpy(dtype=float)
    if not np.all(np.isfinite(matrix)):
        raise DocumentError(f"Non-finite entry in {path}")
    return matrix


def load_triplets_csv(path: str | Path, size_n: int | None = None) -> np.ndarray:
    """
    Load an (i, j, value) triplet list into a dense matrix.

    ``size_n`` defaults to one past the largest index. Repeated pairs add up.
    """
    triplets = load_dense_csv(path)
    if triplets.shape[1] != 3:
        raise DocumentError(
            f"Triplet file {path} must have 3 columns, got {triplets.shape[1]}"
        )
    ij = triplets[:, :2]
    if np.any(ij < 0) or np.any(ij != np.round(ij)):
        raise DocumentError(f"Triplet indices in {path} must be nonnegative integers")
    ij = ij.astype(int)
    n = size_n if size_n is not None else int(ij.max()) + 1 if len(ij) else 0
    if n < 1 or (len(ij) and ij.max() >= n):
        raise DocumentError(f"Triplet indices in {path} exceed size {n}")
    matrix = np.zeros((n, n))
    np.add.at(matrix, (ij[:, 0], ij[:, 1]), triplets[:, 2])
    return matrix


def load_matrix(path: str | Path, size_n: int | None = None) -> np.ndarray:
    """Dense CSV, or triplets when the file name ends in ``.triplets.csv``."""
    if str(path).endswith(".triplets.csv"):
        return load_triplets_csv(path, size_n)
    return load_dense_csv(path)


def load_similarity(path: str | Path) -> SimilarityMatrix:
    return SimilarityMatrix(entries=load_matrix(path))


def load_graph_cut(path: str | Path, lam: float = 1.0, alpha: float = 1.0) -> GraphCutSpec:
    return GraphCutSpec(edge_weights=load_matrix(path), lam=lam, alpha=alpha)


def load_log_det(path: str | Path) -> LogDetSpec:
    return LogDetSpec(matrix=load_dense_csv(path))


# ============================================================================
# Function Documents
# ============================================================================


def _error(stage: str, code: str, message: str, **details: Any) -> dict[str, Any]:
    entry: dict[str, Any] = {"stage": stage, "code": code, "message": message}
    if details:
        entry["details"] = details
    return entry


def parse_document_text(content: str, fmt: str = "json") -> Any:
    if fmt in ("yaml", "yml"):
        return yaml.safe_load(content)
    return json.loads(content)


def validate_function_document(content: str, fmt: str = "json") -> dict[str, Any]:
    """
    Validate a function document without building the function.

    Args:
        content: JSON or YAML text
        fmt: "json" or "yaml"

    Returns:
        {
            "success": bool,
            "errors": list[dict],   # stage, code, message, details?
            "warnings": list[dict],
            "info": dict            # schema_version, kind, size_n
        }
    """
    result: dict[str, Any] = {"success": False, "errors": [], "warnings": [], "info": {}}

    if len(content) > DOCUMENT_MAX_SIZE:
        result["errors"].append(
            _error(
                "size_check",
                "FILE_TOO_LARGE",
                f"Document exceeds the limit of {DOCUMENT_MAX_SIZE / 1024 / 1024}MB",
            )
        )
        return result

    if not content.strip():
        result["errors"].append(_error("content_check", "EMPTY_CONTENT", "Empty document"))
        return result

    try:
        data = parse_document_text(content, fmt)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        result["errors"].append(
            _error("parsing", "SYNTAX_ERROR", f"Invalid {fmt.upper()} document: {e}")
        )
        return result

    if not isinstance(data, dict):
        result["errors"].append(
            _error("parsing", "INVALID_DOCUMENT_TYPE", "Document must be a mapping")
        )
        return result

    declared = data.get("schema_version", CURRENT_SCHEMA_VERSION)
    if not isinstance(declared, str):
        result["errors"].append(
            _error(
                "version_check",
                "INVALID_VERSION_TYPE",
                f"Invalid schema_version type, expected str, got {type(declared).__name__}",
            )
        )
        return result
    result["info"]["schema_version"] = declared

    try:
        current = pkg_version.parse(CURRENT_SCHEMA_VERSION)
        imported = pkg_version.parse(declared)
    except pkg_version.InvalidVersion:
        result["errors"].append(
            _error("version_check", "INVALID_VERSION_FORMAT", f"Invalid version: {declared}")
        )
        return result
    if imported.major != current.major:
        result["errors"].append(
            _error(
                "version_check",
                "UNSUPPORTED_VERSION",
                f"schema_version {declared} is incompatible with {CURRENT_SCHEMA_VERSION}",
            )
        )
        return result
    if imported > current:
        result["warnings"].append(
            _error(
                "version_check",
                "NEWER_VERSION",
                f"schema_version {declared} is newer than {CURRENT_SCHEMA_VERSION}",
            )
        )

    function = data.get("function")
    if not isinstance(function, dict):
        result["errors"].append(
            _error("schema_validation", "MISSING_FUNCTION", "Missing function mapping")
        )
        return result
    result["info"]["kind"] = function.get("kind")

    try:
        document = FunctionDocument.model_validate(data)
    except ValidationError as e:
        for issue in e.errors():
            result["errors"].append(
                _error(
                    "schema_validation",
                    "FIELD_ERROR",
                    issue["msg"],
                    location=[str(p) for p in issue["loc"]],
                )
            )
        return result

    try:
        handle = build_document(document)
    except (SpecError, ValueError) as e:
        result["errors"].append(_error("construction", "INVALID_SPEC", str(e)))
        return result

    result["info"]["size_n"] = handle.size_n
    result["success"] = True
    return result


def build_document(document: FunctionDocument) -> SetFunctionHandle:
    ground = None
    if document.labels is not None:
        ground = GroundSet(size_n=len(document.labels), labels=tuple(document.labels))
    return build_function(document.function, ground)


def load_function_document(path: str | Path) -> FunctionDocument:
    """
    Read and validate a JSON/YAML function document.

    Raises:
        DocumentError: Carrying the staged error list when validation fails
    """
    path = Path(path)
    fmt = "yaml" if path.suffix.lower() in (".yaml", ".yml") else "json"
    try:
        content = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DocumentError(f"Cannot read {path}: {e}") from e

    report = validate_function_document(content, fmt)
    if not report["success"]:
        first = report["errors"][0]
        raise DocumentError(
            f"{path}: {first['stage']}/{first['code']}: {first['message']}",
            report["errors"],
        )
    return FunctionDocument.model_validate(parse_document_text(content, fmt))


def load_function(path: str | Path) -> SetFunctionHandle:
    return build_document(load_function_document(path))
