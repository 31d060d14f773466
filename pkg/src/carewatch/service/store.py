"""Append-only JSONL persistence for patients, events and alerts."""

import json
import logging
import os
import threading

from ..errors import CareWatchError, DataError

log = logging.getLogger(__name__)

KINDS = ("patients", "events", "alerts")


class Store:
    """One ``<kind>.jsonl`` file per record kind under ``data_dir``.

    Appends are serialized by a single lock and flushed before returning.
    """

    def __init__(self, data_dir, fsync=False):
        self.data_dir = os.path.abspath(data_dir)
        self.fsync = fsync
        self._lock = threading.Lock()
        try:
            os.makedirs(self.data_dir, exist_ok=True)
            probe = os.path.join(self.data_dir, ".write-probe")
            with open(probe, "w") as fh:
                fh.write("ok")
            os.remove(probe)
        except OSError as exc:
            raise CareWatchError(f"data directory {self.data_dir} is not writable: {exc.strerror}") from None
        self._files = {}

    def path(self, kind):
        return os.path.join(self.data_dir, f"{kind}.jsonl")

    def recover(self):
        """Read every log; a torn final line is dropped (and truncated away) with a warning."""
        out = {}
        for kind in KINDS:
            out[kind] = self._read(kind)
        for kind in KINDS:
            self._files[kind] = open(self.path(kind), "a", encoding="utf-8")
        return out

    def _read(self, kind):
        path = self.path(kind)
        if not os.path.exists(path):
            return []
        with open(path, "rb") as fh:
            raw = fh.read()
        records = []
        offset = 0
        lines = raw.split(b"\n")
        for i, line in enumerate(lines):
            last = i == len(lines) - 1
            if last and line == b"":
                break
            try:
                if last:
                    raise ValueError("missing newline")
                records.append(json.loads(line.decode("utf-8")))
            except (ValueError, UnicodeDecodeError) as exc:
                is_final = last or (i == len(lines) - 2 and lines[-1] == b"")
                if not is_final:
                    raise DataError(f"{path}:{i + 1}: corrupt record ({exc})") from None
                log.warning("%s:%d: discarding torn final record (%d bytes)", path, i + 1, len(line))
                with open(path, "r+b") as fh:
                    fh.truncate(offset)
                break
            offset += len(line) + 1
        return records

    def append(self, kind, record):
        line = json.dumps(record, separators=(",", ":")) + "\n"
        with self._lock:
            fh = self._files[kind]
            fh.write(line)
            fh.flush()
            if self.fsync:
                os.fsync(fh.fileno())

    def close(self):
        with self._lock:
            for fh in self._files.values():
                fh.close()
            self._files = {}
