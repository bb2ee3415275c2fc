"""JSON checkpoint format shared by both models.

Layout (version 1)::

    {
      "checkpoint_version": 1,
      "kind": "sacnn" | "direction",
      "config": {...},                      # model config
      "params": {name: {"shape": [...], "values": [...]}},
      "buffers": {name: {"shape", "values"}},   # e.g. batch-norm running stats
      "optimizer": {"t": int, "m": {name: entry}, "v": {name: entry}},
      "extra": {...}                        # kind-specific, e.g. keypoint stats
    }

Floats are written with ``repr`` precision so a load/save round trip is
exact, and keys are sorted so equal checkpoints are equal bytes.
"""

from __future__ import annotations

from ..io import SchemaError, array_entry, entry_array, read_json, write_json
from .optim import AdamState

CHECKPOINT_VERSION = 1


def save_checkpoint(path, kind, config, params, buffers=None, optimizer=None, extra=None):
    obj = {
        "checkpoint_version": CHECKPOINT_VERSION,
        "kind": kind,
        "config": config,
        "params": {k: array_entry(v) for k, v in params.items()},
        "buffers": {k: array_entry(v) for k, v in (buffers or {}).items()},
        "optimizer": None,
        "extra": extra or {},
    }
    if optimizer is not None:
        obj["optimizer"] = {
            "t": optimizer.t,
            "m": {k: array_entry(v) for k, v in optimizer.m.items()},
            "v": {k: array_entry(v) for k, v in optimizer.v.items()},
        }
    write_json(path, obj)


def load_checkpoint(path, kind=None):
    obj = read_json(path)
    if obj.get("checkpoint_version") != CHECKPOINT_VERSION:
        raise SchemaError(f"{path}: unsupported checkpoint_version {obj.get('checkpoint_version')}")
    if kind is not None and obj.get("kind") != kind:
        raise SchemaError(f"{path}: expected a {kind!r} checkpoint, got {obj.get('kind')!r}")
    opt = obj.get("optimizer")
    state = AdamState()
    if opt:
        state = AdamState(
            m={k: entry_array(v) for k, v in opt["m"].items()},
            v={k: entry_array(v) for k, v in opt["v"].items()},
            t=int(opt["t"]),
        )
    return {
        "kind": obj["kind"],
        "config": obj["config"],
        "params": {k: entry_array(v) for k, v in obj["params"].items()},
        "buffers": {k: entry_array(v) for k, v in obj.get("buffers", {}).items()},
        "optimizer": state,
        "extra": obj.get("extra", {}),
    }
