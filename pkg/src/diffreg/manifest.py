"""Run manifests: YAML (or JSON) files mirroring :class:`RegistrationConfig` plus run plumbing."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields

import yaml

from .errors import ConfigurationError
from .solver import RegistrationConfig


@dataclass
class RunManifest:
    template: str | None = None  # VolumeFile paths; both None -> generate SYN on ``grid``
    reference: str | None = None
    velocity_init: str | None = None
    grid: list[int] = field(default_factory=lambda: [32, 32, 32])
    out_dir: str = "out"
    report: str = "report.json"  # relative to out_dir
    p: int = 1
    seed: int = 0
    config: RegistrationConfig = field(default_factory=RegistrationConfig)

    def __post_init__(self):
        if self.p < 1:
            raise ConfigurationError("p must be a positive integer")
        if len(self.grid) != 3 or any(int(n) < 1 for n in self.grid):
            raise ConfigurationError("grid must list three positive sizes")
        if (self.template is None) != (self.reference is None):
            raise ConfigurationError("give both template and reference, or neither")

    @property
    def report_path(self) -> str:
        return os.path.join(self.out_dir, self.report)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid)
        return d


def _check_type(key: str, value, default):
    if default is None or value is None:
        if value is not None and not isinstance(value, str):
            raise ConfigurationError(f"{key}: expected a path string")
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigurationError(f"{key}: expected true/false, got {value!r}")
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{key}: expected an integer, got {value!r}")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{key}: expected a number, got {value!r}")
        value = float(value)
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigurationError(f"{key}: expected a string, got {value!r}")
    elif isinstance(default, list):
        if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise ConfigurationError(f"{key}: expected a list of integers, got {value!r}")
    return value


def _strict(cls, data: dict, where: str, nested: tuple[str, ...] = ()) -> dict:
    if not isinstance(data, dict):
        raise ConfigurationError(f"{where}: expected a mapping")
    names = {f.name for f in fields(cls)} - set(nested)
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigurationError(f"{where}: unknown key(s) {', '.join(unknown)}")
    defaults = cls()
    return {k: _check_type(f"{where}.{k}", v, getattr(defaults, k)) for k, v in data.items()}


def manifest_from_dict(data: dict | None) -> RunManifest:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError("manifest: expected a mapping at the top level")
    data = dict(data)
    cfg = _strict(RegistrationConfig, data.pop("config", None) or {}, "config")
    top = _strict(RunManifest, data, "manifest", nested=("config",))
    try:
        return RunManifest(**top, config=RegistrationConfig(**cfg))
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc


def parse_manifest(text: str) -> RunManifest:
    """Parse YAML (JSON is a subset). Unknown keys and wrong types raise ConfigurationError."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"manifest is not valid YAML/JSON: {exc}") from exc
    return manifest_from_dict(data)


def render_manifest(m: RunManifest, fmt: str = "yaml") -> str:
    d = m.to_dict()
    if fmt == "json":
        return json.dumps(d, indent=2) + "\n"
    return yaml.safe_dump(d, sort_keys=False)


def load_manifest(path: str | os.PathLike) -> RunManifest:
    with open(path) as fh:
        return parse_manifest(fh.read())

