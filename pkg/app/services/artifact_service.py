"""
Artifact Service
JSON / JSON Lines stage artifacts and content hashes
"""
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Type, TypeVar, Union

from pydantic import BaseModel, ValidationError

from app.core.exceptions import ConfigError, MissingInputError

M = TypeVar("M", bound=BaseModel)

PathLike = Union[str, Path]


class ArtifactService:
    @staticmethod
    def canonical_json(data: Any) -> str:
        return json.dumps(data, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def content_hash(data: Any) -> str:
        """sha256 over the canonical JSON rendering"""
        return hashlib.sha256(ArtifactService.canonical_json(data).encode()).hexdigest()

    @staticmethod
    def write_json(data: Any, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @staticmethod
    def read_json(path: PathLike) -> Any:
        path = Path(path)
        if not path.is_file():
            raise MissingInputError(f"File not found: {path}")
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path} is not valid JSON: {e}") from e

    @staticmethod
    def write_document(document: BaseModel, path: PathLike) -> Path:
        return ArtifactService.write_json(document.model_dump(mode="json"), path)

    @staticmethod
    def read_document(model: Type[M], path: PathLike) -> M:
        data = ArtifactService.read_json(path)
        try:
            return model.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"Invalid {model.__name__} file {path}: {e}") from e

    @staticmethod
    def start_jsonl(path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("", encoding="utf-8")
        return path

    @staticmethod
    def append_jsonl(record: Dict[str, Any], path: PathLike) -> None:
        with open(path, "a", encoding="utf-8", newline="\n") as f:
            f.write(json.dumps(record, sort_keys=True) + "\n")

    @staticmethod
    def read_jsonl(path: PathLike) -> List[Dict[str, Any]]:
        path = Path(path)
        if not path.is_file():
            raise MissingInputError(f"File not found: {path}")
        records = []
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}:{lineno} is not valid JSON: {e}") from e
        return records
