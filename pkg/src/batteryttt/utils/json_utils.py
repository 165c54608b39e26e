"""
JSON utilities for schema validation and pydantic-backed document loading.

Provides tools to:
- Validate parameter-store and checkpoint containers against JSON schemas
- Load JSON documents into pydantic models with errors mapped to ConfigError
- Write JSON deterministically
"""

import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Type, TypeVar

from jsonschema import ValidationError, validate
from pydantic import BaseModel
from pydantic import ValidationError as PydanticValidationError

from ..exceptions import ConfigError, ParseError

M = TypeVar("M", bound=BaseModel)

PARAM_STORE_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["version", "frozen", "params"],
    "properties": {
        "version": {"const": 1},
        "frozen": {"type": "boolean"},
        "params": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["shape", "data"],
                "properties": {
                    "shape": {
                        "type": "array",
                        "items": {"type": "integer", "minimum": 0},
                        "maxItems": 3,
                    },
                    "data": {"type": "array", "items": {"type": "number"}},
                },
            },
        },
    },
}

CHECKPOINT_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["version", "model_config", "store"],
    "properties": {
        "version": {"const": 1},
        "model_config": {"type": "object"},
        "store": PARAM_STORE_SCHEMA,
        "backbone": {"anyOf": [PARAM_STORE_SCHEMA, {"type": "null"}]},
    },
}


def validate_json_schema(data: Any, schema: Dict[str, Any]) -> Tuple[bool, Optional[str]]:
    """
    Validate JSON data against a JSON schema.

    Args:
        data: Parsed JSON data (dict or list)
        schema: JSON schema definition

    Returns:
        Tuple of (valid: bool, error_message: str | None)
    """
    try:
        validate(instance=data, schema=schema)
        return True, None
    except ValidationError as e:
        location = "/".join(str(p) for p in e.absolute_path) or "<root>"
        return False, f"Schema validation failed at {location}: {e.message}"


def validate_param_store(payload: Any) -> None:
    """
    Validate a parameter-store container, including shape/data consistency.

    Raises:
        ConfigError: If the container is malformed
    """
    ok, error = validate_json_schema(payload, PARAM_STORE_SCHEMA)
    if not ok:
        raise ConfigError(error or "invalid parameter store")
    for name, entry in payload["params"].items():
        expected = 1
        for dim in entry["shape"]:
            expected *= dim
        if expected != len(entry["data"]):
            raise ConfigError(
                f"parameter '{name}' has {len(entry['data'])} values for shape {entry['shape']}"
            )


def read_json(path: str | Path) -> Any:
    """
    Read a JSON document.

    Raises:
        ParseError: If the file is missing or not valid JSON
    """
    path = Path(path)
    if not path.exists():
        raise ParseError("file not found", path=str(path))
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", path=str(path), line=e.lineno) from e


def write_json(path: str | Path, data: Any) -> Path:
    """Write ``data`` with sorted keys so identical inputs give identical bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_model_document(path: str | Path, pydantic_model: Type[M]) -> M:
    """
    Parse a JSON file into a pydantic model.

    Example:
        >>> fleet = load_model_document("data/source_fleet.json", FleetConfig)

    Raises:
        ConfigError: If the document fails pydantic validation
    """
    data = read_json(path)
    return parse_with_pydantic(data, pydantic_model, source=str(path))


def parse_with_pydantic(data: Any, pydantic_model: Type[M], source: str = "<memory>") -> M:
    try:
        return pydantic_model.model_validate(data)
    except PydanticValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "<root>"
        raise ConfigError(
            f"{source}: {pydantic_model.__name__}.{where}: {first['msg']}",
            {"errors": len(e.errors())},
        ) from e
