"""
Run configuration: a flat ``key = value`` text file validated by JSON Schema.

Grammar: one pair per line, ``#`` starts a comment, blank lines are ignored.
Values are typed from the schema (number, integer, boolean, string) before
the whole mapping is validated, so every message carries the line number of
the offending key.
"""

import logging
import math
import re
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from jsonschema import Draft202012Validator

from .adaptive import AdaptiveConfig
from .errors import ConfigError, ConfigErrorDetail, DomainError
from .fem import SolverSettings, SourceTerm
from .kacanov import ScheduleConfig
from .mesh import Mesh, make_lshape_mesh, make_unit_disk_mesh, refine_uniformly
from .relaxation import Exponents, RelaxInterval
from .schema_registry import load_schema, supported_versions
from .steepest_descent import BaselineConfig

logger = logging.getLogger(__name__)

KEY_PATTERN = re.compile(r"^[a-z][a-z0-9_]*$")
MODES = ("schedule", "fixed_interval", "adaptive", "steepest_compare")


@dataclass(frozen=True)
class RunConfig:
    """Resolved parameters of one experiment; defaults mirror the schema."""

    mode: str
    domain: str = "lshape"
    p: float = 10.0
    f: float = 1.0
    mesh_resolution: int = 4
    disk_boundary_vertices: int = 8
    eps_minus: float = 1e-6
    eps_plus: float = 1e6
    initial_guess: str = "zero"
    gap_tol: float = 1e-9
    max_iterations: int = 500
    alpha: Optional[float] = None
    beta: Optional[float] = None
    rho: float = 1e-3
    theta: float = 0.3
    eps_plus_factor: float = 1.25
    eps_minus_factor: float = 0.8
    stop_tolerance: float = 1e-8
    stop_criterion: str = "total"
    max_rounds: int = 200
    refine_mesh: bool = True
    max_accumulated_ndof: int = 0
    delta: float = 1e-6
    line_search_tol: float = 1e-10
    compare_gap_tol: float = 1e-7
    reference_gap_tol: float = 1e-9
    solver: str = "direct"
    solver_rtol: float = 1e-12
    record_wall_time: bool = False
    output_dir: str = "output"
    seed: int = 0
    config_version: Optional[str] = None

    # --- Derived parameter objects ---

    def exponents(self) -> Exponents:
        return Exponents(self.p)

    def relax_interval(self) -> RelaxInterval:
        return RelaxInterval(self.eps_minus, self.eps_plus)

    def schedule_config(self) -> ScheduleConfig:
        default = ScheduleConfig.default_for(
            self.exponents(), self.max_iterations, self.gap_tol
        )
        return ScheduleConfig(
            alpha=default.alpha if self.alpha is None else self.alpha,
            beta=default.beta if self.beta is None else self.beta,
            max_iterations=self.max_iterations,
            gap_tol=self.gap_tol,
        )

    def adaptive_config(self) -> AdaptiveConfig:
        return AdaptiveConfig(
            rho=self.rho,
            doerfler_theta=self.theta,
            eps_plus_factor=self.eps_plus_factor,
            eps_minus_factor=self.eps_minus_factor,
            stop_tolerance=self.stop_tolerance,
            max_rounds=self.max_rounds,
            refine_mesh=self.refine_mesh,
            stop_criterion=self.stop_criterion,
            max_accumulated_ndof=self.max_accumulated_ndof,
        )

    def baseline_config(self, max_iterations: Optional[int] = None) -> BaselineConfig:
        return BaselineConfig(
            delta=self.delta,
            line_search_tol=self.line_search_tol,
            max_iterations=(
                self.max_iterations if max_iterations is None else max_iterations
            ),
        )

    def solver_settings(self) -> SolverSettings:
        return SolverSettings(method=self.solver, rtol=self.solver_rtol)

    def initial_mesh(self) -> Mesh:
        if self.domain == "disk":
            return make_unit_disk_mesh(self.disk_boundary_vertices)
        return make_lshape_mesh()

    def build_mesh(self) -> Mesh:
        return refine_uniformly(self.initial_mesh(), self.mesh_resolution)

    def source(self, mesh: Mesh) -> SourceTerm:
        return SourceTerm.constant(mesh, self.f)

    def resolved(self) -> "RunConfig":
        """Copy with alpha and beta filled in from the schedule default."""
        sched = self.schedule_config()
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(alpha=sched.alpha, beta=sched.beta)
        return RunConfig(**values)

    def manifest_lines(self) -> List[str]:
        """Every resolved parameter in the config grammar."""
        resolved = self.resolved()
        lines = []
        for f in fields(resolved):
            value = getattr(resolved, f.name)
            if value is None:
                continue
            lines.append(f"{f.name} = {format_value(value)}")
        return lines


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _split_lines(
    text: str,
) -> Tuple[Dict[str, Tuple[str, int]], List[ConfigErrorDetail]]:
    pairs: Dict[str, Tuple[str, int]] = {}
    errors: List[ConfigErrorDetail] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(
                ConfigErrorDetail(
                    f"expected 'key = value', got {raw.strip()!r}",
                    line=number,
                    validator="syntax",
                )
            )
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if not KEY_PATTERN.match(key) or not value:
            errors.append(
                ConfigErrorDetail(
                    f"malformed pair {raw.strip()!r}", line=number, validator="syntax"
                )
            )
            continue
        if key in pairs:
            errors.append(
                ConfigErrorDetail(
                    f"duplicate key (first set on line {pairs[key][1]})",
                    key=key,
                    line=number,
                    validator="duplicate",
                    suggestion="Keep a single line for each key.",
                )
            )
            continue
        pairs[key] = (value, number)
    return pairs, errors


def _coerce(raw: str, declared: str) -> Any:
    if declared == "number":
        value = float(raw)
        if not math.isfinite(value):
            raise ValueError(raw)
        return value
    if declared == "integer":
        return int(raw)
    if declared == "boolean":
        lowered = raw.lower()
        if lowered not in ("true", "false"):
            raise ValueError(raw)
        return lowered == "true"
    return raw


def _typed_values(
    pairs: Dict[str, Tuple[str, int]], schema: Dict[str, Any]
) -> Tuple[Dict[str, Any], List[ConfigErrorDetail]]:
    properties = schema.get("properties", {})
    values: Dict[str, Any] = {}
    errors: List[ConfigErrorDetail] = []
    for key, (raw, number) in pairs.items():
        if key not in properties:
            errors.append(
                ConfigErrorDetail(
                    "unknown key",
                    key=key,
                    line=number,
                    validator="unknown_key",
                    validator_value=sorted(properties),
                    instance_value=key,
                )
            )
            continue
        declared = properties[key].get("type", "string")
        try:
            values[key] = _coerce(raw, declared)
        except ValueError:
            errors.append(
                ConfigErrorDetail(
                    f"{raw!r} is not of type '{declared}'",
                    key=key,
                    line=number,
                    validator="type",
                    validator_value=declared,
                    instance_value=raw,
                )
            )
    return values, errors


def _cross_checks(config: RunConfig, lines: Dict[str, int]) -> List[ConfigErrorDetail]:
    errors: List[ConfigErrorDetail] = []
    if config.eps_minus > config.eps_plus:
        errors.append(
            ConfigErrorDetail(
                f"eps_minus = {config.eps_minus} exceeds eps_plus = {config.eps_plus}",
                key="eps_minus",
                line=lines.get("eps_minus"),
                validator="constraint",
                suggestion="Choose eps_minus <= eps_plus.",
            )
        )
    if config.mode == "schedule":
        try:
            config.schedule_config().validate(config.exponents())
        except DomainError as err:
            errors.append(
                ConfigErrorDetail(
                    str(err),
                    key="alpha",
                    line=lines.get("alpha", lines.get("beta")),
                    validator="constraint",
                    suggestion="Lower alpha or beta so that alpha + beta <= 1/(2-q).",
                )
            )
    return errors


def parse_config_text(text: str, source: str = "<string>") -> RunConfig:
    """
    Parse and validate configuration text.

    Raises:
        ConfigError: listing every problem found, each with its line number.
    """
    pairs, errors = _split_lines(text)
    lines = {key: number for key, (_, number) in pairs.items()}

    versions = supported_versions()
    version = pairs.get("config_version", (None, 0))[0]
    if version is not None and version not in versions:
        raise ConfigError(
            f"Invalid configuration in {source}",
            [
                ConfigErrorDetail(
                    f"config version '{version}' is not supported",
                    key="config_version",
                    line=lines["config_version"],
                    validator="enum",
                    validator_value=list(versions),
                    instance_value=version,
                )
            ],
        )
    schema = load_schema(version)

    values, type_errors = _typed_values(pairs, schema)
    errors.extend(type_errors)

    for missing in schema.get("required", []):
        if missing not in pairs:
            errors.append(
                ConfigErrorDetail(
                    f"'{missing}' is a required key",
                    key=missing,
                    validator="required",
                    validator_value=[missing],
                )
            )

    validator = Draft202012Validator(schema)
    for error in sorted(validator.iter_errors(values), key=lambda e: list(e.path)):
        if error.validator == "required":
            continue
        key = str(error.path[0]) if error.path else None
        errors.append(
            ConfigErrorDetail(
                error.message,
                key=key,
                line=lines.get(key) if key else None,
                validator=str(error.validator),
                validator_value=error.validator_value,
                instance_value=error.instance,
            )
        )

    if errors:
        raise ConfigError(f"Invalid configuration in {source}", errors)

    config = RunConfig(**values)
    errors = _cross_checks(config, lines)
    if errors:
        raise ConfigError(f"Invalid configuration in {source}", errors)
    logger.debug("parsed %d keys from %s", len(values), source)
    return config


def parse_config(path: Union[str, Path]) -> RunConfig:
    """Read and validate a configuration file; see :func:`parse_config_text`."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"Cannot read configuration {path}: {err}") from err
    return parse_config_text(text, source=str(path))
