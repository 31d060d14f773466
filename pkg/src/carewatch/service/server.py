"""HTTP/1.1 JSON API over :class:`MonitorEngine` using the stdlib server."""

import json
import logging
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

from ..errors import DataError
from ..nn import load_model
from .engine import Conflict, MonitorEngine, NotFound, now_ms
from .store import Store

log = logging.getLogger(__name__)

MAX_BODY = 8 * 1024 * 1024
_PATIENT = re.compile(r"^/v1/patients/([^/]+)$")
_ACCEL = re.compile(r"^/v1/patients/([^/]+)/accel$")
_EVENTS = re.compile(r"^/v1/patients/([^/]+)/events$")


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "carewatch"

    @property
    def engine(self):
        return self.server.engine

    def log_message(self, fmt, *args):
        log.debug("%s - %s", self.address_string(), fmt % args)

    def _send(self, status, payload):
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status, message):
        self._send(status, {"error": message, "status": status})

    def _body(self):
        length = int(self.headers.get("Content-Length") or 0)
        if length > MAX_BODY:
            raise DataError("request body too large")
        raw = self.rfile.read(length) if length else b""
        try:
            return json.loads(raw.decode("utf-8") or "null")
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise DataError(f"malformed JSON body: {exc}") from None

    def _dispatch(self, handler):
        try:
            handler()
        except NotFound as exc:
            self._error(404, str(exc))
        except Conflict as exc:
            self._error(409, str(exc))
        except (DataError, ValueError) as exc:
            self._error(400, str(exc))
        except (BrokenPipeError, ConnectionResetError):
            pass
        except Exception:  # pragma: no cover - reported to the client, logged here
            log.exception("unhandled error for %s %s", self.command, self.path)
            self._error(500, "internal error")

    def do_POST(self):
        self._dispatch(self._post)

    def do_GET(self):
        self._dispatch(self._get)

    def _post(self):
        url = urlsplit(self.path)
        if url.path == "/v1/patients":
            self._send(201, self.engine.register(self._body()))
            return
        m = _ACCEL.match(url.path)
        if m:
            pid = m.group(1)
            self.engine.patient(pid)
            event, alert = self.engine.ingest(pid, self._body())
            self._send(202, {"event": event, "alert": alert})
            return
        self._error(404, f"no route for POST {url.path}")

    def _get(self):
        url = urlsplit(self.path)
        query = {k: v[-1] for k, v in parse_qs(url.query).items()}
        if url.path == "/v1/health":
            self._send(200, {"status": "ok", "server_time": now_ms()})
        elif url.path == "/v1/patients":
            self._send(200, {"patients": self.engine.patients()})
        elif url.path == "/v1/alerts":
            self._send(200, {"alerts": self.engine.alerts(_int(query, "since_id", 0))})
        elif url.path == "/v1/alerts/stream":
            self._stream(query)
        elif _EVENTS.match(url.path):
            pid = _EVENTS.match(url.path).group(1)
            since = _float(query, "since", 0.0)
            limit = _int(query, "limit", 100)
            if limit < 0:
                raise DataError("limit must be >= 0")
            self._send(200, {"events": self.engine.events(pid, since, limit)})
        elif _PATIENT.match(url.path):
            st = self.engine.patient(_PATIENT.match(url.path).group(1))
            self._send(200, {"patient_id": st.record.patient_id, "name": st.record.name,
                             "fall_risk": st.record.fall_risk, "registered_at": st.record.registered_at})
        else:
            self._error(404, f"no route for GET {url.path}")

    def _stream(self, query):
        """Line-delimited alerts as they fire, heartbeats in between."""
        last = _int(query, "since_id", self.engine.last_alert_id)
        self.send_response(200)
        self.send_header("Content-Type", "application/x-ndjson")
        self.send_header("Cache-Control", "no-cache")
        self.send_header("Connection", "close")
        self.end_headers()
        self.close_connection = True
        self.wfile.write(b'{"stream":"alerts","since_id":%d}\n' % last)
        self.wfile.flush()
        heartbeat = self.server.heartbeat_seconds
        while not self.engine.closed:
            fresh = self.engine.wait_alerts(last, heartbeat)
            if self.engine.closed:
                break
            if fresh:
                for alert in fresh:
                    self.wfile.write(json.dumps(alert).encode("utf-8") + b"\n")
                    last = alert["alert_id"]
            else:
                self.wfile.write(b'{"heartbeat":%d}\n' % now_ms())
            self.wfile.flush()


def _int(query, key, default):
    try:
        return int(query[key]) if key in query else default
    except ValueError:
        raise DataError(f"query parameter {key!r} must be an integer") from None


def _float(query, key, default):
    try:
        return float(query[key]) if key in query else default
    except ValueError:
        raise DataError(f"query parameter {key!r} must be a number") from None


class Service:
    """Owns the store, engine and HTTP server; ``start()`` serves on a background thread."""

    def __init__(self, config, model=None):
        self.config = config
        if model is None:
            if not config.model_path:
                raise DataError("config has no model_path")
            model = load_model(config.model_path)
        self.engine = MonitorEngine(model, Store(config.data_dir, config.fsync), config)
        self.httpd = ThreadingHTTPServer((config.host, config.port), _Handler)
        self.httpd.daemon_threads = True
        self.httpd.engine = self.engine
        self.httpd.heartbeat_seconds = config.heartbeat_seconds
        self._thread = None

    @property
    def port(self):
        return self.httpd.server_address[1]

    @property
    def url(self):
        return f"http://{self.config.host}:{self.port}"

    def start(self):
        self._thread = threading.Thread(target=self.httpd.serve_forever, name="carewatch-http", daemon=True)
        self._thread.start()
        return self

    def serve_forever(self):
        self.httpd.serve_forever()

    def stop(self):
        self.engine.close()
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
        self.engine.store.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
