"""Validated scenario configs in, JSON-ready reports out.

Shared by the REST views and the ``lab`` management command. The report body is
deterministic; timing and the trace id live only in the run envelope.
"""
import json
import logging
import math
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import numpy as np
from django.utils import timezone
from rest_framework import serializers

from .capacity import (
    boundary_capacity,
    boundary_capacity_primal,
    interior_capacity,
    pairing_slack,
    rho_star,
)
from .conf import lab_setting
from .experiments import ExperimentSpec, interior_set, run_experiment
from .grid import ScalarField, build_grid, export_csv, first_eigenfunction
from .measures import BoundarySet, boundary_measure_from_dict, interior_measure_from_dict
from .orlicz import LuxemburgNorm, NFunctionPair, llogl_norm, luxemburg_norm, orlicz_norm
from .potentials import INCONCLUSIVE, admissibility_test, grid_family, poisson_potential
from .serializers import (
    AdmissibilityConfigSerializer,
    CapacityConfigSerializer,
    ExperimentConfigSerializer,
    OrliczNormConfigSerializer,
    SolveConfigSerializer,
)
from .solver import Nonlinearity, solve_dirichlet, test_battery, truncation_scheme, weak_residual

logger = logging.getLogger(__name__)

SOLVE = "solve"
CAPACITY = "capacity"
ORLICZ_NORM = "orlicz-norm"
ADMISSIBILITY = "admissibility"
EXPERIMENT = "experiment"
COMMANDS = (SOLVE, CAPACITY, ORLICZ_NORM, ADMISSIBILITY, EXPERIMENT)


@dataclass
class ScenarioResult:
    kind: str
    config: dict
    report: dict
    verdict: str = ""
    fields: Dict[str, ScalarField] = field(default_factory=dict, repr=False)
    trace_id: uuid.UUID = field(default_factory=uuid.uuid4)
    duration_ms: int = 0

    @property
    def inconclusive(self) -> bool:
        return self.verdict == INCONCLUSIVE

    def envelope(self) -> dict:
        return {
            "trace_id": str(self.trace_id),
            "kind": self.kind,
            "verdict": self.verdict,
            "config": self.config,
            "report": self.report,
            "duration_ms": self.duration_ms,
            "created_at": timezone.now().isoformat(),
        }


def to_jsonable(value):
    """Plain Python containers with non-finite floats spelled as strings."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def _validated(serializer_class, config: dict) -> dict:
    serializer = serializer_class(data=config)
    serializer.is_valid(raise_exception=True)
    return serializer.validated_data


def _grid(block: Optional[dict]):
    block = block or {}
    return build_grid(block.get("domain_kind", "unit_square"), int(block.get("n", 64)))


def _boundary_measure(block):
    return None if block is None else boundary_measure_from_dict(block)


def run_solve(config: dict) -> ScenarioResult:
    data = _validated(SolveConfigSerializer, config)
    grid = _grid(data.get("grid"))
    nonlinearity = Nonlinearity.from_name(data.get("nonlinearity", "exp"))
    mu = _boundary_measure(data.get("measure"))
    source = None if data.get("source") is None else interior_measure_from_dict(data["source"])
    tolerances = data.get("tolerances") or {}

    if data.get("truncation"):
        report = truncation_scheme(grid, mu, k_schedule=data.get("k_schedule"),
                                   nonlinearity=nonlinearity, probe=data.get("probe"))
    else:
        boundary = mu if mu is not None else (data.get("boundary_value") or 0.0)
        report = solve_dirichlet(grid, boundary, nonlinearity, source=source,
                                 tol=tolerances.get("newton_tol"),
                                 max_iter=tolerances.get("newton_max_iter"))
    body = {"grid": {"domain_kind": grid.domain_kind, "n": grid.n}, **report.summary()}
    if mu is not None and source is None:
        body["battery_residual"] = weak_residual(report.u, mu, test_battery(grid), nonlinearity)
    verdict = "saturated" if report.saturated else "converged"
    return ScenarioResult(SOLVE, config, body, verdict, {"u": report.u})


def run_capacity(config: dict) -> ScenarioResult:
    data = _validated(CapacityConfigSerializer, config)
    grid = _grid(data.get("grid"))
    block = data["set"]
    if block["location"] == "boundary":
        K = BoundarySet(tuple(tuple(arc) for arc in block.get("arcs", [])))
        if data.get("with_dual", True):
            report = boundary_capacity(K, grid, margin=data.get("margin"))
        else:
            report = boundary_capacity_primal(K, grid, margin=data.get("margin"))
        body = report.to_dict()
        if report.eta is not None and report.dual_weights is not None:
            body["pairing_slack"] = pairing_slack(report, grid)
        eta = ScalarField(grid, np.zeros(grid.num_interior), report.eta)
    else:
        K = interior_set(grid, block)
        margin = data.get("margin")
        report = interior_capacity(K, grid, variant=data.get("variant", "luxemburg"),
                                   margin=1 if margin is None else margin,
                                   with_dual=data.get("with_dual", True))
        body = report.to_dict()
        eta = ScalarField(grid, report.eta, np.zeros(grid.num_boundary))
    body["grid"] = {"domain_kind": grid.domain_kind, "n": grid.n}
    body["rho_star_defect"] = rho_star(grid).superharmonic_defect()
    verdict = "stagnated" if report.stagnated else "converged"
    return ScenarioResult(CAPACITY, config, body, verdict, {"eta": eta})


def run_orlicz_norm(config: dict) -> ScenarioResult:
    data = _validated(OrliczNormConfigSerializer, config)
    grid = _grid(data.get("grid"))
    source = data["field"]
    if source["kind"] == "constant":
        field_ = ScalarField.constant(grid, source.get("value", 1.0))
    elif source["kind"] == "poisson":
        field_ = poisson_potential(grid, boundary_measure_from_dict(source["measure"])).field
    else:
        field_, _ = first_eigenfunction(grid)
    weight = data.get("weight", "rho")
    pair = NFunctionPair.power(data["power"]) if data.get("power") else NFunctionPair.exponential()
    spec = LuxemburgNorm(data.get("nfunction", "P"), weight, pair=pair)
    norm = data.get("norm", "luxemburg")
    if norm == "luxemburg":
        value = luxemburg_norm(field_, spec)
    elif norm == "orlicz":
        value = orlicz_norm(field_, spec)
    else:
        value = llogl_norm(field_, weight)
    body = {"norm": norm, "nfunction": spec.nfunction, "weight": weight,
            "pair": pair.name, "value": value}
    return ScenarioResult(ORLICZ_NORM, config, body, "computed", {"field": field_})


def run_admissibility(config: dict) -> ScenarioResult:
    data = _validated(AdmissibilityConfigSerializer, config)
    mu = boundary_measure_from_dict(data["measure"])
    grids = grid_family(data.get("domain_kind", "unit_square"), data.get("n0", 32))
    rows = []
    for a in data.get("scales", [1.0]):
        report = admissibility_test(grids, mu.scaled(a), tau=data.get("tau"), growth=data.get("growth"))
        rows.append({"a": a, **report.to_dict()})
    verdicts = {row["verdict"] for row in rows}
    verdict = INCONCLUSIVE if INCONCLUSIVE in verdicts else ",".join(sorted(verdicts))
    body = {"levels": [g.n for g in grids], "rows": rows}
    return ScenarioResult(ADMISSIBILITY, config, body, verdict)


def run_experiment_config(config: dict, kind: Optional[str] = None) -> ScenarioResult:
    if kind is not None:
        config = {**config, "kind": kind}
    data = _validated(ExperimentConfigSerializer, config)
    spec = ExperimentSpec(data["kind"], dict(data.get("params", {})), tuple(data.get("levels", [])),
                          data.get("domain_kind", "unit_square"))
    report = run_experiment(spec)
    verdict = report.get("verdict", "completed")
    return ScenarioResult(EXPERIMENT, config, report, verdict)


RUNNERS = {
    SOLVE: run_solve,
    CAPACITY: run_capacity,
    ORLICZ_NORM: run_orlicz_norm,
    ADMISSIBILITY: run_admissibility,
}


def run_scenario(command: str, config: dict, kind: Optional[str] = None) -> ScenarioResult:
    if command not in COMMANDS:
        raise serializers.ValidationError({"command": f"Unknown command: {command}"})
    started = time.time()
    result = run_experiment_config(config, kind) if command == EXPERIMENT else RUNNERS[command](config)
    result.report = to_jsonable(result.report)
    result.config = to_jsonable(result.config)
    result.duration_ms = int((time.time() - started) * 1000)
    logger.info(f"Scenario {command} finished - trace_id: {result.trace_id}, "
                f"verdict: {result.verdict}, duration: {result.duration_ms}ms")
    return result


def write_outputs(result: ScenarioResult, output_dir=None) -> Path:
    """``<trace>.json`` plus one ``<trace>_<name>.csv`` per exported field."""
    out = Path(output_dir or lab_setting("OUTPUT_DIR"))
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{result.trace_id}.json"
    path.write_text(json.dumps(result.envelope(), indent=2, sort_keys=True))
    for name, field_ in result.fields.items():
        export_csv(field_, out / f"{result.trace_id}_{name}.csv")
    return path
