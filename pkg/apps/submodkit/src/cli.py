"""
submodkit Command Line

Batch pipelines over datasets and function documents. Every command prints a
single JSON RunReport to standard output; logs go to standard error.

Exit codes: 0 success, 1 input error, 2 infeasible problem, 64 usage error.
"""

import argparse
import json
import sys
import time
from collections.abc import Callable
from pathlib import Path
from typing import Any, NoReturn

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field

from .analysis import check_monotone, check_submodular, shapley_value
from .config import configure_logging
from .core import (
    Condition,
    GroundSet,
    ModularWeights,
    Restrict,
    SetFunctionHandle,
    SubmodError,
    derive_transform,
)
from .datasets import DatasetTable, KernelSpec, build_kernel, ingest
from .info import q_cluster, uncertainty_diversity_batch
from .loaders import (
    build_document,
    load_function_document,
    load_matrix,
    validate_function_document,
)
from .maximize import (
    CardinalityConstraint,
    InfeasibleError,
    KnapsackConstraint,
    greedy_cardinality,
    greedy_knapsack,
)
from .minimize import min_norm_point, queyranne_minimize
from .norms import NormHandle, check_norm_axioms, norm_eval
from .schemas import CURRENT_SCHEMA_VERSION, GraphCutSpec, LogDetSpec
from .zoo import build_facility_location, build_graph_cut, build_log_det

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_USAGE = 64

FUNCTION_KINDS = ("facility-location", "graph-cut", "log-det")


class UsageError(SubmodError):
    """Bad command line."""
    pass


class InputError(SubmodError):
    """Command line refers to something the inputs do not have."""
    pass


class RunReport(BaseModel):
    """What one invocation did; everything but wall_time is reproducible."""

    schema_version: str = CURRENT_SCHEMA_VERSION
    command: str
    config: dict[str, Any]
    seed: int | None = None
    payload: dict[str, Any]
    oracle_calls: int = Field(default=0, description="Calls on the base objective")
    wall_time: float = Field(default=0.0, description="Seconds")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        raise UsageError(message)


class Objective:
    """The handle a command runs on, the ids naming its elements and the raw table."""

    def __init__(
        self,
        handle: SetFunctionHandle,
        ids: list[str],
        table: DatasetTable | None = None,
    ):
        self.handle = handle
        self.ids = ids
        self.table = table

    def names(self, indices: list[int]) -> list[str]:
        return [self.ids[v] for v in indices]

    def index_of(self, names: list[str]) -> list[int]:
        lookup = {name: v for v, name in enumerate(self.ids)}
        missing = [name for name in names if name not in lookup]
        if missing:
            raise InputError(f"unknown element ids: {', '.join(missing)}")
        return [lookup[name] for name in names]

    def column(self, name: str, flag: str) -> np.ndarray:
        if self.table is None:
            raise UsageError(f"{flag} needs a --data table")
        return self.table.column(name)


Payload = dict[str, Any]
Handler = Callable[[argparse.Namespace], tuple[Payload, Objective | None]]


# ============================================================================
# Objective Construction
# ============================================================================


def _split_ids(text: str | None) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()] if text else []


def _default_ids(n: int) -> list[str]:
    return [str(v) for v in range(n)]


def _document_objective(path: Path) -> Objective:
    handle = build_document(load_function_document(path))
    labels = handle.ground.labels
    return Objective(handle, list(labels) if labels else _default_ids(handle.size_n))


def _matrix_objective(
    kind: str, matrix: np.ndarray, args: argparse.Namespace, ground: GroundSet | None
) -> SetFunctionHandle:
    match kind:
        case "facility-location":
            return build_facility_location(matrix, ground)
        case "graph-cut":
            edges = matrix.copy()
            np.fill_diagonal(edges, 0.0)
            return build_graph_cut(
                GraphCutSpec(edge_weights=edges, lam=args.lam, alpha=args.alpha), ground
            )
        case "log-det":
            ridged = matrix + args.ridge * np.eye(matrix.shape[0])
            return build_log_det(LogDetSpec(matrix=ridged), ground)
    raise UsageError(f"unknown function kind '{kind}'")


def build_objective(args: argparse.Namespace, reserved: list[str] | None = None) -> Objective:
    """
    Resolve ``--config`` / ``--function`` into an Objective.

    Args:
        args: Parsed command line
        reserved: Table columns that are not features (costs, scores)

    ``--function`` is one of facility-location, graph-cut or log-det (a
    kernel over ``--data``), or ``file:<path>``: a JSON/YAML function
    document, or a CSV matrix read as ``--matrix-kind``.
    """
    table = ingest(args.data, args.format, args.id_column) if args.data else None

    if args.config:
        objective = _document_objective(args.config)
        objective.table = table
        return objective

    source = args.function
    if not source:
        raise UsageError("one of --function or --config is required")
    if source.startswith("file:"):
        path = Path(source.removeprefix("file:"))
        if path.suffix.lower() in (".json", ".yaml", ".yml"):
            objective = _document_objective(path)
        else:
            handle = _matrix_objective(args.matrix_kind, load_matrix(path), args, None)
            objective = Objective(handle, _default_ids(handle.size_n))
        objective.table = table
        return objective

    if source not in FUNCTION_KINDS:
        raise UsageError(
            f"--function must be one of {', '.join(FUNCTION_KINDS)} or file:<path>"
        )
    if table is None or not args.kernel:
        raise UsageError(f"--function {source} needs --data and --kernel")
    features = table.drop([c for c in reserved or [] if c in table.columns])
    sim = build_kernel(features, KernelSpec.parse(args.kernel, args.normalization))
    ground = GroundSet(size_n=table.size_n, labels=tuple(table.ids))
    logger.info("built {} kernel over {} rows", args.kernel, table.size_n)
    return Objective(_matrix_objective(source, sim.entries, args, ground), table.ids, table)


def _require_seed(args: argparse.Namespace, what: str) -> int:
    if args.seed is None:
        raise UsageError(f"--seed is required for {what}")
    return int(args.seed)


# ============================================================================
# Commands
# ============================================================================


def cmd_summarize(args: argparse.Namespace) -> tuple[Payload, Objective]:
    """
    Greedy summarization under a cardinality or knapsack budget.

    Returns:
        {
            "selected": list[str],   # ids in selection order
            "order": list[int],
            "gains": list[float],
            "value": float,
            "given": list[str],      # ids conditioned on
            "certificate": dict
        }
    """
    objective = build_objective(args, [args.cost_column] if args.cost_column else None)
    f = objective.handle
    given = objective.index_of(_split_ids(args.update_given))
    pool = list(range(f.size_n))
    if given:
        taken = f.subset(given)
        pool = taken.complement().indices()
        if not pool:
            raise InputError("--update-given covers every element")
        f = derive_transform(f, Condition(given=taken))
        f = derive_transform(f, Restrict(within=taken.complement()))
        logger.info("conditioning on {} given elements", len(given))

    if args.budget is not None:
        if not args.cost_column:
            raise UsageError("--budget needs --cost-column")
        costs = objective.column(args.cost_column, "--cost-column")[pool]
        knapsack = KnapsackConstraint(costs=ModularWeights(weights=costs), budget=args.budget)
        result = greedy_knapsack(f, knapsack, args.tolerance)
    else:
        if args.k is None:
            raise UsageError("summarize needs --k or --budget")
        result = greedy_cardinality(
            f,
            CardinalityConstraint(k=args.k),
            lazy=args.lazy,
            tolerance=args.tolerance,
            workers=args.workers,
        )
    order = [pool[i] for i in result.order]
    payload = {
        "selected": objective.names(order),
        "order": order,
        "gains": result.gains,
        "value": result.value,
        "given": objective.names(given),
        "certificate": result.certificate.model_dump(),
    }
    return payload, objective


def cmd_cluster(args: argparse.Namespace) -> tuple[Payload, Objective]:
    """Q-clustering into ``--k`` clusters; clusters are reported as id lists."""
    objective = build_objective(args)
    tree = q_cluster(objective.handle, args.k)
    payload = {
        "clusters": [objective.names(members) for members in tree.clusters()],
        "tree": tree.model_dump(),
    }
    return payload, objective


def cmd_minimize(args: argparse.Namespace) -> tuple[Payload, Objective]:
    """Min-norm-point minimization, or Queyranne with ``--symmetric``."""
    objective = build_objective(args)
    if args.symmetric:
        certificate = queyranne_minimize(
            objective.handle, args.tolerance, seed=args.seed or 0
        )
        method = "queyranne"
    else:
        certificate = min_norm_point(objective.handle, args.tolerance)
        method = "min-norm-point"
    payload = {
        "method": method,
        "min_set": objective.names(certificate.min_set),
        "certificate": certificate.model_dump(),
    }
    return payload, objective


def cmd_check(args: argparse.Namespace) -> tuple[Payload, Objective]:
    """Submodularity and/or monotonicity reports with an overall verdict."""
    objective = build_objective(args)
    seed = _require_seed(args, "sampled checks") if args.mode == "sampled" else 0
    reports: dict[str, Any] = {}
    if args.property in ("submodular", "all"):
        reports["submodular"] = check_submodular(
            objective.handle, args.mode, seed, args.samples, args.tolerance
        ).model_dump()
    if args.property in ("monotone", "all"):
        reports["monotone"] = check_monotone(
            objective.handle, args.mode, seed, args.samples, args.tolerance
        ).model_dump()
    payload = {
        "reports": reports,
        "verdict": all(report["verdict"] for report in reports.values()),
    }
    return payload, objective


def cmd_shapley(args: argparse.Namespace) -> tuple[Payload, Objective]:
    objective = build_objective(args)
    if args.mode == "sampled":
        seed = _require_seed(args, "sampled Shapley values")
        report = shapley_value(objective.handle, "sampled", args.samples, seed)
    else:
        report = shapley_value(objective.handle, "exact")
    payload = report.model_dump()
    payload["by_id"] = dict(zip(objective.ids, report.values))
    return payload, objective


def cmd_norm(args: argparse.Namespace) -> tuple[Payload, Objective]:
    """Evaluate ||x||_f for ``--x`` and/or probe the norm axioms with ``--trials``."""
    objective = build_objective(args)
    h = NormHandle(objective.handle, args.tolerance)
    payload: Payload = {}
    if args.x is not None:
        try:
            x = [float(part) for part in args.x.split(",")]
        except ValueError as e:
            raise UsageError(f"--x must be comma-separated numbers: {e}") from e
        payload["x"] = x
        payload["norm"] = norm_eval(h, x)
    if args.trials is not None:
        seed = _require_seed(args, "norm axiom trials")
        payload["axioms"] = check_norm_axioms(h, args.trials, seed, args.tolerance).model_dump()
    if not payload:
        raise UsageError("norm needs --x or --trials")
    return payload, objective


def cmd_active_batch(args: argparse.Namespace) -> tuple[Payload, Objective]:
    """Uncertainty (``--scores`` column) plus diversity batch of size ``--k``."""
    objective = build_objective(args, [args.scores])
    scores = objective.column(args.scores, "--scores")
    labeled = objective.index_of(_split_ids(args.labeled))
    selection = uncertainty_diversity_batch(
        objective.handle,
        scores,
        args.k,
        objective.handle.subset(labeled) if labeled else None,
        args.tolerance,
    )
    payload = {
        "batch": objective.names(selection.batch),
        "order": selection.batch,
        "gains": selection.gains,
        "value": selection.value,
    }
    return payload, objective


def cmd_validate(args: argparse.Namespace) -> tuple[Payload, None]:
    """Staged validation result of a function document (see loaders)."""
    path = Path(args.document)
    fmt = "yaml" if path.suffix.lower() in (".yaml", ".yml") else "json"
    return validate_function_document(path.read_text(encoding="utf-8"), fmt), None


# ============================================================================
# Parser
# ============================================================================


def _objective_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--function", help="facility-location | graph-cut | log-det | file:<path>"
    )
    common.add_argument("--config", type=Path, help="JSON/YAML function document")
    common.add_argument("--data", type=Path, help="dataset CSV or JSON")
    common.add_argument("--format", choices=["csv", "json"], default=None)
    common.add_argument("--id-column", default=None)
    common.add_argument(
        "--kernel", help="rbf:<bandwidth> | cosine | dot | precomputed:<path>"
    )
    common.add_argument(
        "--normalization", choices=["clip_nonneg", "none"], default="clip_nonneg"
    )
    common.add_argument(
        "--matrix-kind",
        choices=list(FUNCTION_KINDS),
        default="graph-cut",
        help="family of a file:<matrix>.csv function",
    )
    common.add_argument("--lambda", dest="lam", type=float, default=1.0)
    common.add_argument("--alpha", type=float, default=1.0)
    common.add_argument("--ridge", type=float, default=1e-6, help="log-det diagonal shift")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--tolerance", type=float, default=None)
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="submodkit", description="Submodular optimization toolkit")
    parser.add_argument("--log-level", default=None, help="stderr log level")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _objective_options()

    p = sub.add_parser("summarize", parents=[common], help="greedy subset selection")
    p.add_argument("--k", type=int)
    p.add_argument("--budget", type=float)
    p.add_argument("--cost-column")
    p.add_argument("--update-given", help="comma-separated ids to condition on")
    p.add_argument("--lazy", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(handler=cmd_summarize)

    p = sub.add_parser("cluster", parents=[common], help="Q-clustering")
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(handler=cmd_cluster)

    p = sub.add_parser("minimize", parents=[common], help="submodular minimization")
    p.add_argument("--symmetric", action="store_true")
    p.set_defaults(handler=cmd_minimize)

    p = sub.add_parser("check", parents=[common], help="property checks")
    p.add_argument("--mode", choices=["exhaustive", "sampled"], default="exhaustive")
    p.add_argument("--property", choices=["submodular", "monotone", "all"], default="all")
    p.add_argument("--samples", type=int, default=None)
    p.set_defaults(handler=cmd_check)

    p = sub.add_parser("shapley", parents=[common], help="Shapley values")
    p.add_argument("--mode", choices=["exact", "sampled"], default="exact")
    p.add_argument("--samples", type=int, default=1000)
    p.set_defaults(handler=cmd_shapley)

    p = sub.add_parser("norm", parents=[common], help="submodular norm")
    p.add_argument("--x", help="comma-separated vector")
    p.add_argument("--trials", type=int)
    p.set_defaults(handler=cmd_norm)

    p = sub.add_parser("active-batch", parents=[common], help="active learning batch")
    p.add_argument("--scores", required=True, help="uncertainty score column")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--labeled", help="comma-separated ids already labeled")
    p.set_defaults(handler=cmd_active_batch)

    p = sub.add_parser("validate", help="validate a function document")
    p.add_argument("document", help="JSON/YAML function document")
    p.set_defaults(handler=cmd_validate, seed=None)
    return parser


def _echo(args: argparse.Namespace) -> dict[str, Any]:
    return {
        key: str(value) if isinstance(value, Path) else value
        for key, value in sorted(vars(args).items())
        if key != "handler"
    }


def run_command(argv: list[str]) -> tuple[RunReport | None, int]:
    """
    Parse and run one invocation.

    Returns:
        (report, exit code); the report is None when the run failed
    """
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        logger.error("usage: {}", e)
        return None, EXIT_USAGE
    except SystemExit as e:
        # --help
        return None, int(e.code or 0)

    if args.log_level:
        configure_logging(args.log_level)
    handler: Handler = args.handler
    started = time.perf_counter()
    try:
        payload, objective = handler(args)
    except UsageError as e:
        logger.error("usage: {}", e)
        return None, EXIT_USAGE
    except InfeasibleError as e:
        logger.error("infeasible: {}", e)
        return None, EXIT_INFEASIBLE
    except (SubmodError, ValueError, OSError) as e:
        logger.error("{}: {}", type(e).__name__, e)
        return None, EXIT_INPUT

    report = RunReport(
        command=args.command,
        config=_echo(args),
        seed=args.seed,
        payload=payload,
        oracle_calls=objective.handle.eval_count if objective else 0,
        wall_time=time.perf_counter() - started,
    )
    exit_code = EXIT_OK
    if args.command == "validate" and not payload["success"]:
        exit_code = EXIT_INPUT
    return report, exit_code


def main(argv: list[str] | None = None) -> int:
    """Entry point for the submodkit command."""
    configure_logging()
    report, exit_code = run_command(sys.argv[1:] if argv is None else argv)
    if report is not None:
        print(json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True))
    return exit_code
