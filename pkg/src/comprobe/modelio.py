"""Model file format (nnwb-v1), deterministic JSON/CSV report emission.

Weights are serialized as plain decimals with 17 significant digits, which
round-trips any IEEE-754 double bit-exactly while keeping files diffable.
The JSON emitter preserves dict insertion order and formats every float
the same way, so regenerating a report from identical inputs yields
identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time

import numpy as np

from .errors import FormatError
from .network import Network

__all__ = [
    "FORMAT_TAG",
    "format_float",
    "dumps_json",
    "dump_json",
    "flatten_report",
    "report_to_csv",
    "write_report",
    "config_digest",
    "save_model",
    "load_model",
    "history_to_csv",
]

FORMAT_TAG = "nnwb-v1"


def format_float(value: float) -> str:
    if value != value:  # NaN
        return "NaN"
    if value in (float("inf"), float("-inf")):
        return "Infinity" if value > 0 else "-Infinity"
    return format(float(value), ".17g")


def _emit(obj, out: list, indent: int):
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (key, val) in enumerate(obj.items()):
            out.append(f"{pad}  {json.dumps(str(key))}: ")
            _emit(val, out, indent + 1)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(np.asarray(obj).tolist()) if isinstance(obj, np.ndarray) else list(obj)
        if not seq:
            out.append("[]")
            return
        scalars = all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq)
        if scalars:
            out.append("[")
            for i, val in enumerate(seq):
                _emit(val, out, indent)
                if i < len(seq) - 1:
                    out.append(", ")
            out.append("]")
        else:
            out.append("[\n")
            for i, val in enumerate(seq):
                out.append(pad + "  ")
                _emit(val, out, indent + 1)
                out.append(",\n" if i < len(seq) - 1 else "\n")
            out.append(pad + "]")
    elif isinstance(obj, bool) or isinstance(obj, np.bool_):
        out.append("true" if obj else "false")
    elif obj is None:
        out.append("null")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    else:
        raise FormatError(f"cannot serialize value of type {type(obj).__name__}")


def dumps_json(doc) -> str:
    out: list = []
    _emit(doc, out, 0)
    out.append("\n")
    return "".join(out)


def dump_json(doc, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_json(doc))


def flatten_report(doc, prefix: str = "") -> list:
    """Depth-first (path, value) pairs; list entries use [i] segments."""
    rows = []
    if isinstance(doc, dict):
        for key, val in doc.items():
            sub = f"{prefix}.{key}" if prefix else str(key)
            rows.extend(flatten_report(val, sub))
    elif isinstance(doc, (list, tuple, np.ndarray)):
        seq = np.asarray(doc).tolist() if isinstance(doc, np.ndarray) else list(doc)
        for i, val in enumerate(seq):
            rows.extend(flatten_report(val, f"{prefix}[{i}]"))
    else:
        rows.append((prefix, doc))
    return rows


def _csv_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return format_float(float(value))
    return str(value)


def report_to_csv(doc) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["field", "value"])
    for path, value in flatten_report(doc):
        writer.writerow([path, _csv_value(value)])
    return buf.getvalue()


def write_report(doc, path: str, fmt: str = "json"):
    if fmt == "json":
        dump_json(doc, path)
    elif fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(report_to_csv(doc))
    else:
        raise FormatError(f"unknown report format {fmt!r}")


def config_digest(config) -> str:
    return hashlib.sha256(dumps_json(config).encode("utf-8")).hexdigest()[:16]


def _matrix_block(arr: np.ndarray) -> dict:
    mat = np.atleast_2d(np.asarray(arr, dtype=np.float64))
    return {
        "rows": int(mat.shape[0]),
        "cols": int(mat.shape[1]),
        "data": [float(v) for v in mat.ravel()],
    }


def save_model(net: Network, path: str, metadata: dict | None = None):
    """Write the network in nnwb-v1 form; weights round-trip bit-exactly."""
    meta = dict(metadata or {})
    meta.setdefault("seed", None)
    meta.setdefault("config_digest", None)
    meta.setdefault("created", time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()))
    doc = {
        "format": FORMAT_TAG,
        "layers": [_matrix_block(w) for w in net.layers],
        "head": {
            "kind": "vector" if net.head.ndim == 1 else "matrix",
            **_matrix_block(net.head),
        },
        "metadata": meta,
    }
    dump_json(doc, path)


def _block_to_array(block: dict, where: str) -> np.ndarray:
    try:
        rows, cols = int(block["rows"]), int(block["cols"])
        data = np.asarray(block["data"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{where}: malformed matrix block ({exc})") from exc
    if data.size != rows * cols:
        raise FormatError(
            f"{where}: data length {data.size} does not match {rows}x{cols}"
        )
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{where}: non-finite weight values")
    return data.reshape(rows, cols)


def load_model(path: str):
    """Read an nnwb-v1 file; returns (Network, metadata)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_TAG:
        raise FormatError(f"{path}: missing or wrong format tag (expected {FORMAT_TAG!r})")
    layers = [
        _block_to_array(block, f"{path}: layer {i + 1}")
        for i, block in enumerate(doc.get("layers", []))
    ]
    head_block = doc.get("head")
    if not isinstance(head_block, dict):
        raise FormatError(f"{path}: missing head block")
    head = _block_to_array(head_block, f"{path}: head")
    if head_block.get("kind") == "vector":
        head = head.ravel()
    return Network(layers, head), dict(doc.get("metadata", {}))


def history_to_csv(history, path: str):
    """Per-epoch training stats as CSV with one frobenius column per layer."""
    n_layers = len(history[0].fro_norms) if history else 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["epoch", "train_loss", "val_loss", "clean_acc", "robust_acc", "eps_sigma", "eps_nu"]
            + [f"fro_norm_{i + 1}" for i in range(n_layers)]
        )
        for row in history:
            writer.writerow(
                [row.epoch]
                + [
                    format_float(v)
                    for v in (
                        row.train_loss,
                        row.val_loss,
                        row.clean_acc,
                        row.robust_acc,
                        row.eps_sigma,
                        row.eps_nu,
                    )
                ]
                + [format_float(v) for v in row.fro_norms]
            )
