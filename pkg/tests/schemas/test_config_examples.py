"""Tests for the example configuration files against the packaged schema."""

import dataclasses

import pytest

from plap_kacanov.config import RunConfig, parse_config
from plap_kacanov.errors import ConfigError
from plap_kacanov.schema_registry import load_schema
from tests.conftest import EXAMPLES_DIR, PROJECT_ROOT

VALID_EXAMPLES = sorted((EXAMPLES_DIR / "valid").glob("*.conf"))
INVALID_EXAMPLES = sorted((EXAMPLES_DIR / "invalid").glob("*.conf"))
EXPERIMENTS = sorted((PROJECT_ROOT / "experiments").glob("*.conf"))


def _expected_validator(path):
    """Invalid examples name the failing validator in a '# expect:' header."""
    first = path.read_text(encoding="utf-8").splitlines()[0]
    assert first.startswith("# expect:"), f"{path.name} lacks an expect header"
    return first.split(":", 1)[1].strip()


@pytest.mark.parametrize("path", VALID_EXAMPLES, ids=lambda p: p.name)
def test_valid_examples(path):
    """Valid example files parse without errors."""
    try:
        parse_config(path)
    except ConfigError as e:
        pytest.fail(f"Parsing failed unexpectedly for {path.name}:\n{e}")


@pytest.mark.parametrize("path", EXPERIMENTS, ids=lambda p: p.name)
def test_shipped_experiments(path):
    """The experiment configs in experiments/ stay valid."""
    parse_config(path)


@pytest.mark.parametrize("path", INVALID_EXAMPLES, ids=lambda p: p.name)
def test_invalid_examples(path):
    """Invalid example files fail with the expected validator and a line number."""
    expected = _expected_validator(path)
    with pytest.raises(ConfigError) as excinfo:
        parse_config(path)
    errors = excinfo.value.errors
    assert [e.validator for e in errors] == [expected]
    if expected != "required":
        assert errors[0].line is not None
    assert str(path) in str(excinfo.value)


def test_examples_present():
    assert VALID_EXAMPLES and INVALID_EXAMPLES and EXPERIMENTS


def test_schema_defaults_match_run_config():
    """Every schema default equals the RunConfig field default."""
    properties = load_schema("0.1.0")["properties"]
    defaults = {
        f.name: f.default
        for f in dataclasses.fields(RunConfig)
        if f.default is not dataclasses.MISSING
    }
    assert set(properties) == {f.name for f in dataclasses.fields(RunConfig)}
    for key, prop in properties.items():
        if "default" in prop:
            assert defaults[key] == prop["default"], key
        else:
            assert defaults.get(key) is None, key
