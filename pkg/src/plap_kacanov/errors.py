from dataclasses import dataclass, field
from typing import Any, List, Optional, Sequence

# Optional fuzzywuzzy import
try:
    from fuzzywuzzy import process as fuzzy_process

    HAS_FUZZY = True
except ImportError:
    HAS_FUZZY = False


def closest_match(value: str, choices: Sequence[str]) -> Optional[str]:
    """Return the best fuzzy match for ``value`` among ``choices`` (or None)."""
    if not HAS_FUZZY or not value or not choices:
        return None
    try:
        best_match, score = fuzzy_process.extractOne(value, list(choices))
    except Exception:
        return None
    return best_match if score > 80 else None


@dataclass
class ConfigErrorDetail:
    """Represents a single problem found in a run configuration."""

    message: str
    key: Optional[str] = None
    line: Optional[int] = None
    validator: str = ""
    validator_value: Any = None
    instance_value: Any = None
    suggestion: Optional[str] = None

    def __post_init__(self):
        """Generate suggestions based on error type after initialization."""
        if self.suggestion is None:
            self._generate_suggestion()

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line is not None else ""
        what = f"key '{self.key}': " if self.key else ""
        msg = f"{where}{what}{self.message}"
        if self.suggestion:
            msg += f" -- Suggestion: {self.suggestion}"
        return msg

    def _generate_suggestion(self):
        """Internal method to populate the suggestion field based on validator type."""
        if self.validator == "required":
            missing = self.validator_value
            if isinstance(missing, list):
                keys_str = "', '".join(missing)
                self.suggestion = f"Add a line '{keys_str} = ...' to the config file."
            else:
                self.suggestion = "Add the required key to the config file."

        elif self.validator == "unknown_key":
            match = closest_match(str(self.instance_value), self.validator_value or [])
            if match:
                self.suggestion = f"Did you mean '{match}'?"
            else:
                self.suggestion = "Remove the line or check the key spelling."

        elif self.validator == "type":
            expected = self.validator_value
            if isinstance(expected, list):
                expected = "' or '".join(expected)
            self.suggestion = f"Use a value of type '{expected}'."

        elif self.validator == "enum":
            allowed = self.validator_value
            if isinstance(allowed, list):
                text = f"Value must be one of: {', '.join(map(repr, allowed))}."
                if isinstance(self.instance_value, str):
                    match = closest_match(
                        self.instance_value, [str(v) for v in allowed]
                    )
                    if match:
                        text += f" Did you mean '{match}'?"
                self.suggestion = text

        elif self.validator == "minimum":
            self.suggestion = f"Ensure value is at least {self.validator_value}."

        elif self.validator == "maximum":
            self.suggestion = f"Ensure value is at most {self.validator_value}."

        elif self.validator == "exclusiveMinimum":
            self.suggestion = (
                f"Ensure value is strictly greater than {self.validator_value}."
            )

        elif self.validator == "exclusiveMaximum":
            self.suggestion = (
                f"Ensure value is strictly less than {self.validator_value}."
            )

        elif self.validator == "syntax":
            self.suggestion = "Write one 'key = value' pair per line."


class PlapError(Exception):
    """Base class of all library errors.

    ``history`` holds the convergence records produced before the failure so
    that callers can still flush a partial history.
    """

    def __init__(self, message: str):
        super().__init__(message)
        self.history: List[Any] = []


class InvalidGeometryError(PlapError):
    """Degenerate or inconsistent mesh data."""


class AssemblyError(PlapError):
    """Invalid element data handed to an assembly routine."""


class LinearSolverError(PlapError):
    """A linear solve missed its residual tolerance."""

    def __init__(self, message: str, residual: float, rhs_norm: float):
        super().__init__(f"{message} (residual {residual:.3e}, |b| {rhs_norm:.3e})")
        self.residual = residual
        self.rhs_norm = rhs_norm


class DomainError(PlapError, ValueError):
    """Argument outside the domain of a scalar kernel or parameter type."""


class TransferError(PlapError):
    """Data cannot be moved between the two meshes given."""


class ConfigError(PlapError):
    """Invalid run configuration."""

    def __init__(
        self, message: str, errors: Optional[List[ConfigErrorDetail]] = None
    ):
        super().__init__(message)
        self.errors: List[ConfigErrorDetail] = errors or []

    def __str__(self) -> str:
        base = super().__str__()
        if not self.errors:
            return base
        return base + "\n" + "\n".join(f"  - {detail}" for detail in self.errors)


__all__ = [
    "AssemblyError",
    "ConfigError",
    "ConfigErrorDetail",
    "DomainError",
    "InvalidGeometryError",
    "LinearSolverError",
    "PlapError",
    "TransferError",
    "closest_match",
]
