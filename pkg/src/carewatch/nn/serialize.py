"""Versioned text serialization for :class:`Model`.

Layout (one item per line)::

    carewatch-model
    format_version 1
    rng_seed <int>
    input_shape <d1> <d2> ...
    labels <JSON list>
    meta <JSON object>
    layers <count>
    layer <i> <JSON object>            (count lines)
    tensors <count>
    param|buffer <key> <d1> <d2> ...   followed by one line of values
    end

Tensor values are written with 17 significant digits, which round-trips every
float64 exactly.
"""

import json

import numpy as np

from ..errors import ModelFormatError, ModelVersionError
from .layers import layer_from_dict, layer_to_dict
from .model import FORMAT_VERSION, Model

MAGIC = "carewatch-model"


def _fmt(arr):
    return " ".join("%.17g" % v for v in np.asarray(arr, dtype=np.float64).ravel())


def dumps(model):
    out = [MAGIC, f"format_version {model.format_version}", f"rng_seed {model.rng_seed}",
           "input_shape " + " ".join(str(d) for d in model.input_shape),
           "labels " + json.dumps(list(model.label_names)),
           "meta " + json.dumps(model.meta, sort_keys=True),
           f"layers {len(model.layers)}"]
    for i, layer in enumerate(model.layers):
        out.append(f"layer {i} " + json.dumps(layer_to_dict(layer), sort_keys=True))
    out.append(f"tensors {len(model.params) + len(model.buffers)}")
    for kind, tensors in (("param", model.params), ("buffer", model.buffers)):
        for key, arr in tensors.items():
            out.append(f"{kind} {key} " + " ".join(str(d) for d in arr.shape))
            out.append(_fmt(arr))
    out.append("end")
    return "\n".join(out) + "\n"


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(model))


class _Reader:
    def __init__(self, text):
        self.lines = text.split("\n")
        if self.lines and self.lines[-1] == "":
            self.lines.pop()
        self.pos = 0

    def next(self, field):
        if self.pos >= len(self.lines):
            raise ModelFormatError("unexpected end of document", line=self.pos + 1, field=field)
        self.pos += 1
        return self.lines[self.pos - 1]

    def keyed(self, key):
        line = self.next(key)
        head, _, rest = line.partition(" ")
        if head != key:
            raise ModelFormatError(f"expected {key!r}, found {head!r}", line=self.pos, field=key)
        return rest

    def ints(self, text, field):
        try:
            return [int(t) for t in text.split()]
        except ValueError:
            raise ModelFormatError(f"expected integers, got {text!r}", line=self.pos, field=field) from None

    def json(self, text, field):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"invalid JSON ({exc.msg})", line=self.pos, field=field) from None


def loads(text):
    r = _Reader(text)
    if r.next("magic") != MAGIC:
        raise ModelFormatError("not a carewatch model document", line=1, field="magic")
    version = r.ints(r.keyed("format_version"), "format_version")
    if len(version) != 1:
        raise ModelFormatError("format_version takes one integer", line=r.pos, field="format_version")
    if version[0] != FORMAT_VERSION:
        raise ModelVersionError(f"unsupported format_version {version[0]} (this build reads {FORMAT_VERSION})",
                                line=r.pos, field="format_version")
    seed = r.ints(r.keyed("rng_seed"), "rng_seed")
    input_shape = tuple(r.ints(r.keyed("input_shape"), "input_shape"))
    labels = r.json(r.keyed("labels"), "labels")
    meta = r.json(r.keyed("meta"), "meta")
    n_layers = r.ints(r.keyed("layers"), "layers")
    layers = []
    for i in range(n_layers[0] if n_layers else 0):
        rest = r.keyed("layer")
        idx, _, body = rest.partition(" ")
        if idx != str(i):
            raise ModelFormatError(f"expected layer index {i}, found {idx!r}", line=r.pos, field="layer")
        try:
            layers.append(layer_from_dict(r.json(body, "layer")))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ModelFormatError):
                raise
            raise ModelFormatError(f"bad layer spec: {exc}", line=r.pos, field="layer") from None
    n_tensors = r.ints(r.keyed("tensors"), "tensors")
    params, buffers = {}, {}
    for _ in range(n_tensors[0] if n_tensors else 0):
        header = r.next("tensor").split()
        if len(header) < 2 or header[0] not in ("param", "buffer"):
            raise ModelFormatError("expected 'param' or 'buffer' header", line=r.pos, field="tensor")
        key = header[1]
        shape = tuple(r.ints(" ".join(header[2:]), key))
        values = r.next(key)
        try:
            arr = np.array([float(v) for v in values.split()], dtype=np.float64)
        except ValueError:
            raise ModelFormatError("non-numeric tensor value", line=r.pos, field=key) from None
        if arr.size != int(np.prod(shape)):
            raise ModelFormatError(f"expected {int(np.prod(shape))} values, found {arr.size}", line=r.pos, field=key)
        (params if header[0] == "param" else buffers)[key] = arr.reshape(shape)
    if r.next("end") != "end":
        raise ModelFormatError("expected 'end'", line=r.pos, field="end")
    try:
        return Model(input_shape, tuple(layers), params, tuple(labels), buffers, meta, seed[0], version[0])
    except ValueError as exc:
        raise ModelFormatError(f"inconsistent model: {exc}") from None


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
