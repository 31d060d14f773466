"""Patient monitoring ingestion service."""

from .config import ServiceConfig, load_config
from .engine import MonitorEngine, validate_packet
from .server import Service
from .store import Store

__all__ = ["MonitorEngine", "Service", "ServiceConfig", "Store", "load_config", "validate_packet"]
