"""Pydantic base class for every file format the toolkit reads or writes.

Trees, strategies, laws, run configs and reports all go through it:

    strategy = StrategyFile.load_json("strategy.json")
    cfg = RunConfig.from_yaml("command: verify\naction: gbm\n")
    report.save_json("whi.json", indent=2)

Loading never raises a bare pydantic or parser error. Problems come back as
`InvalidInputError` with one line per mismatch, which the CLI prints before
exiting with code 2.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping, TypeVar, Union

import yaml
from loguru import logger
from pydantic import BaseModel, ValidationError

from adapted_wasserstein.core.errors import InvalidInputError

T = TypeVar("T", bound="SerdeMixin")


class SerdeMixin(BaseModel):
    """JSON / YAML import and export with readable validation errors."""

    def to_dict(self, **dump_kwargs: Any) -> dict[str, Any]:
        return self.model_dump(**dump_kwargs)

    def to_json(self, **dump_kwargs: Any) -> str:
        return self.model_dump_json(**dump_kwargs)

    def to_yaml(self, **dump_kwargs: Any) -> str:
        """Block-style YAML in field order."""
        options: dict[str, Any] = {
            "allow_unicode": True,
            "sort_keys": False,
            "default_flow_style": False,
            "width": 88,
            **dump_kwargs,
        }
        return str(yaml.safe_dump(self.model_dump(mode="json"), **options))

    @classmethod
    def _validated(cls: type[T], data: Any, kind: str, **validate_kwargs: Any) -> T:
        try:
            return cls.model_validate(data, **validate_kwargs)
        except ValidationError as e:
            raise InvalidInputError(cls._format_validation_error(e, kind)) from e

    @classmethod
    def from_json(
        cls: type[T], source: Union[Mapping[str, Any], str, Path], **validate_kwargs: Any
    ) -> T:
        """Build from a mapping, a JSON string, or a path to a JSON file."""
        if isinstance(source, Mapping):
            return cls._validated(source, "JSON", **validate_kwargs)
        text = cls._read_source(source)
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise InvalidInputError(
                f"Not valid JSON: {e.msg} (line {e.lineno}, column {e.colno})."
            ) from e
        return cls._validated(data, "JSON", **validate_kwargs)

    @classmethod
    def from_yaml(cls: type[T], source: Union[str, Path], **validate_kwargs: Any) -> T:
        """Build from a YAML string or a path to a YAML file."""
        text = cls._read_source(source)
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise InvalidInputError(cls._yaml_error_message(e, text)) from e
        return cls._validated(data, "YAML", **validate_kwargs)

    # ---------- files ----------
    def _write(self, path: Union[str, Path], text: str) -> Path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")
        logger.debug(f"{type(self).__name__} -> {target}")
        return target

    def save_json(self, path: Union[str, Path], **dump_kwargs: Any) -> Path:
        """Write the model as JSON and return the path."""
        return self._write(path, self.to_json(**dump_kwargs))

    def save_yaml(self, path: Union[str, Path], **dump_kwargs: Any) -> Path:
        """Write the model as YAML and return the path."""
        return self._write(path, self.to_yaml(**dump_kwargs))

    @classmethod
    def load_json(cls: type[T], path: Union[str, Path], **validate_kwargs: Any) -> T:
        return cls.from_json(Path(path), **validate_kwargs)

    @classmethod
    def load_yaml(cls: type[T], path: Union[str, Path], **validate_kwargs: Any) -> T:
        return cls.from_yaml(Path(path), **validate_kwargs)

    # ---------- error messages ----------
    @staticmethod
    def _read_source(source: Union[str, Path]) -> str:
        """Text of `source`: a Path is always read, a string only if it names a file."""
        if isinstance(source, Path):
            try:
                return source.read_text(encoding="utf-8")
            except OSError as e:
                raise InvalidInputError(f"Cannot read {source}: {e}") from e
        looks_inline = source.lstrip()[:1] in ("{", "[") or "\n" in source
        if not looks_inline and Path(source).is_file():
            return Path(source).read_text(encoding="utf-8")
        return source

    @staticmethod
    def _yaml_error_message(e: yaml.YAMLError, text: str) -> str:
        """Header plus the offending line with a caret under the column."""
        mark = getattr(e, "problem_mark", None)
        if mark is None:
            return f"The YAML is not valid. {e}"
        lines = text.splitlines()
        shown = []
        for i in range(max(mark.line - 1, 0), min(mark.line + 2, len(lines))):
            shown.append(f"{'>' if i == mark.line else ' '} {i + 1:>4}: {lines[i]}")
            if i == mark.line:
                shown.append(" " * (mark.column + 8) + "^")
        where = f"Line {mark.line + 1}, column {mark.column + 1}."
        return "\n".join(["The YAML is not valid.", where, "", *shown])

    @classmethod
    def _format_validation_error(cls, e: ValidationError, kind: str) -> str:
        """One bullet per problem, under a header naming the model."""
        bullets = [f"- {cls._describe(err)}" for err in e.errors()]
        return "\n".join([f"The {kind} loaded, but it does not match {cls.__name__}:", *bullets])

    @classmethod
    def _describe(cls, err: Mapping[str, Any]) -> str:
        loc = ".".join(str(part) for part in err.get("loc", ()))
        kind, msg = err.get("type", ""), err.get("msg", "")
        if kind == "missing":
            return f"Missing required field `{loc}`."
        if kind == "extra_forbidden":
            return f"Unknown field `{loc}` (top-level fields: {', '.join(cls.model_fields)})."
        if kind == "value_error":
            return f"{msg.removeprefix('Value error, ')} (at `{loc}`)."
        if msg.lower().startswith("input should be"):
            return f"Wrong type at `{loc}`: {msg}."
        return f"{(msg[:1].upper() + msg[1:]) or 'Invalid value'} (at `{loc}`)."
