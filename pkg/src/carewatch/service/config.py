"""Service configuration: JSON file plus environment overrides."""

import json
import os
from dataclasses import dataclass, fields, replace

from ..errors import DataError

ENV_PORT = "CAREWATCH_PORT"
ENV_DATA_DIR = "CAREWATCH_DATA_DIR"


@dataclass(frozen=True)
class ServiceConfig:
    data_dir: str = "carewatch-data"
    model_path: str = ""
    host: str = "127.0.0.1"
    port: int = 8080
    alert_k: int = 3
    alert_threshold: float = 0.8
    window_seconds: float = 1.0
    heartbeat_seconds: float = 15.0
    fsync: bool = False

    def __post_init__(self):
        if self.alert_k < 1:
            raise DataError("alert_k must be >= 1")
        if not 0 < self.alert_threshold <= 1:
            raise DataError("alert_threshold must lie in (0, 1]")
        if not self.window_seconds > 0:
            raise DataError("window_seconds must be > 0")
        if not 0 <= self.port <= 65535:
            raise DataError("port must lie in [0, 65535]")


def load_config(path=None, environ=None):
    """Read a JSON config (unknown keys rejected), then apply env overrides."""
    environ = os.environ if environ is None else environ
    values = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                values = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc.msg}, line {exc.lineno})") from None
        if not isinstance(values, dict):
            raise DataError(f"{path}: config must be a JSON object")
        known = {f.name for f in fields(ServiceConfig)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise DataError(f"{path}: unknown config keys {unknown}")
        base = os.path.dirname(os.path.abspath(path))
        for key in ("data_dir", "model_path"):
            if values.get(key) and not os.path.isabs(values[key]):
                values[key] = os.path.join(base, values[key])
    cfg = ServiceConfig(**values)
    if environ.get(ENV_PORT):
        try:
            cfg = replace(cfg, port=int(environ[ENV_PORT]))
        except ValueError:
            raise DataError(f"{ENV_PORT} must be an integer") from None
    if environ.get(ENV_DATA_DIR):
        cfg = replace(cfg, data_dir=environ[ENV_DATA_DIR])
    return cfg
