"""
Result tables and run manifests on disk.

Every CSV starts with ``# key: value`` metadata lines, then the header row and
the data. Only the ``generated`` line changes between identical reruns.
"""

from dataclasses import dataclass, field
from datetime import datetime
from io import StringIO
from pathlib import Path
from typing import Any, Dict, List, Optional, Union
import json
import logging
import os
import tempfile

import pandas as pd

from src.utils.errors import OutputError
from src.utils.settings import VERSION

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12e"
MANIFEST_NAME = "manifest.json"


@dataclass
class ResultTable:
    name: str
    frame: pd.DataFrame
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def headers(self) -> List[str]:
        return [str(c) for c in self.frame.columns]

    @property
    def rows(self) -> List[List[float]]:
        return self.frame.values.tolist()

    @property
    def filename(self) -> str:
        return f"{self.name}.csv"

    def body(self) -> str:
        """Header row and data; the part of the file reruns must reproduce byte for byte"""
        return self.frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")

    def render(self) -> str:
        lines = [f"# version: {VERSION}", f"# generated: {datetime.now().isoformat()}"]
        for key in sorted(self.metadata):
            lines.append(f"# {key}: {json.dumps(self.metadata[key], sort_keys=True)}")
        return "\n".join(lines) + "\n" + self.body()

    def save(self, directory: Union[str, Path]) -> Path:
        path = Path(directory) / self.filename
        atomic_write(path, self.render())
        logger.debug(f"wrote {path} ({len(self.frame)} rows)")
        return path


def atomic_write(path: Union[str, Path], text: str):
    """Write through a temp file in the target directory, then rename over ``path``"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as f:
                f.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.remove(tmp)
            raise
    except OSError as e:
        raise OutputError(f"cannot write result file ({e.strerror})", str(path)) from None


def load_table(path: Union[str, Path]) -> ResultTable:
    path = Path(path)
    try:
        lines = path.read_text().splitlines(keepends=True)
    except OSError as e:
        raise OutputError(f"cannot read result file ({e.strerror})", str(path)) from None

    metadata: Dict[str, Any] = {}
    body_start = 0
    for i, line in enumerate(lines):
        if not line.startswith("#"):
            body_start = i
            break
        key, _, value = line[1:].strip().partition(": ")
        if key in ("version", "generated"):
            metadata[key] = value
        else:
            metadata[key] = json.loads(value)
    else:
        body_start = len(lines)

    frame = pd.read_csv(StringIO("".join(lines[body_start:])))
    return ResultTable(name=path.stem, frame=frame, metadata=metadata)


def table_body(path: Union[str, Path]) -> str:
    """Everything after the metadata block"""
    try:
        lines = Path(path).read_text().splitlines(keepends=True)
    except OSError as e:
        raise OutputError(f"cannot read result file ({e.strerror})", str(path)) from None
    return "".join(line for line in lines if not line.startswith("#"))


# ---------------------------------------------------------------------------
#  Manifests
# ---------------------------------------------------------------------------
@dataclass
class RunRecord:
    config: Dict[str, Any]
    files: List[str]
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": self.config,
            "files": list(self.files),
            "diagnostics": self.diagnostics,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunRecord":
        return cls(
            config=data["config"],
            files=list(data.get("files", [])),
            diagnostics=data.get("diagnostics", {}),
            extra=data.get("extra", {}),
        )


@dataclass
class Manifest:
    kind: str                                   # "runs" or "sweep"
    runs: List[RunRecord] = field(default_factory=list)
    sweep: Optional[Dict[str, Any]] = None      # base config, axis and summary file
    version: str = VERSION
    generated: str = field(default_factory=lambda: datetime.now().isoformat())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "version": self.version,
            "generated": self.generated,
            "runs": [run.to_dict() for run in self.runs],
            "sweep": self.sweep,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Manifest":
        return cls(
            kind=data["kind"],
            runs=[RunRecord.from_dict(r) for r in data.get("runs", [])],
            sweep=data.get("sweep"),
            version=data.get("version", VERSION),
            generated=data.get("generated", ""),
        )

    def save(self, directory: Union[str, Path]) -> Path:
        path = Path(directory) / MANIFEST_NAME
        atomic_write(path, json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        logger.debug(f"wrote manifest {path}")
        return path


def load_manifest(path: Union[str, Path]) -> Manifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except OSError as e:
        raise OutputError(f"cannot read manifest ({e.strerror})", str(path)) from None
    except json.JSONDecodeError as e:
        raise OutputError(f"manifest is not valid JSON (line {e.lineno})", str(path)) from None
    try:
        return Manifest.from_dict(data)
    except (KeyError, TypeError) as e:
        raise OutputError(f"manifest is missing field {e}", str(path)) from None
