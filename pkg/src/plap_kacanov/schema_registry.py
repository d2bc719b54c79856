"""
Packaged run-configuration schemas.

Each version lives in ``schema/versions/<version>/runConfig.schema.json``
inside the package; a config file may pin one with ``config_version``.
"""

import json
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

JsonDict = Dict[str, Any]

SCHEMA_FILENAME = "runConfig.schema.json"
VERSIONS_DIR = Path(__file__).parent / "schema" / "versions"


def _version_key(version: str) -> Tuple[int, ...]:
    try:
        return tuple(int(part) for part in version.split("."))
    except ValueError:
        return ()


def supported_versions(versions_dir: Path = VERSIONS_DIR) -> Tuple[str, ...]:
    """Installed schema versions, oldest first."""
    if not versions_dir.is_dir():
        return ()
    found = [
        item.name
        for item in versions_dir.iterdir()
        if (item / SCHEMA_FILENAME).is_file()
    ]
    return tuple(sorted(found, key=lambda v: (_version_key(v), v)))


@lru_cache(maxsize=None)
def load_schema(
    version: Optional[str] = None, versions_dir: Path = VERSIONS_DIR
) -> JsonDict:
    """
    Schema of ``version``, the latest installed one by default.

    Raises:
        ValueError: If the version is not installed, or none is.
        IOError: If the schema file is not valid JSON.
    """
    versions = supported_versions(versions_dir)
    if not versions:
        raise ValueError(f"No config schema found under {versions_dir}")
    version = version or versions[-1]
    if version not in versions:
        raise ValueError(
            f"Config version '{version}' is not supported. "
            f"Available versions: {list(versions)}"
        )
    path = versions_dir / version / SCHEMA_FILENAME
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise IOError(f"Invalid JSON in schema file {path}: {e}") from e
