"""Checkpoint persistence: a JSON manifest naming the tensors plus a
little-endian float32 binary blob holding them in manifest order.  Both
files are written atomically; the manifest carries a digest of the blob.
"""

import hashlib
import json
import os

import numpy as np

from ..errors import CorruptionError, MigrationError, ValidationError
from .core import Head, NetworkParameters

CHECKPOINT_VERSION = 1


def blob_path(path: str) -> str:
    return str(path) + ".bin"


def save_checkpoint(params: NetworkParameters, path: str, config_echo: dict | None = None):
    tensors = params.tensors()
    blob = b"".join(
        np.ascontiguousarray(v, dtype="<f4").tobytes() for v in tensors.values()
    )
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "head": params.head.value,
        "input_dim": params.input_dim,
        "input_offset": params.input_offset,
        "hidden_dim": params.hidden_dim,
        "output_dim": params.output_dim,
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in tensors.items()],
        "blob": os.path.basename(blob_path(path)),
        "blob_digest": "sha256:" + hashlib.sha256(blob).hexdigest(),
        "config": config_echo or {},
    }
    btmp = blob_path(path) + ".tmp"
    with open(btmp, "wb") as fh:
        fh.write(blob)
    os.replace(btmp, blob_path(path))
    mtmp = str(path) + ".tmp"
    with open(mtmp, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(mtmp, path)


def load_checkpoint(path: str) -> tuple:
    """Returns (params, manifest)."""
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except (json.JSONDecodeError, OSError) as exc:
        raise CorruptionError(f"unreadable checkpoint manifest {path}: {exc}") from exc
    version = manifest.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise MigrationError(
            f"checkpoint format version {version!r} is not supported (expected {CHECKPOINT_VERSION})"
        )
    with open(os.path.join(os.path.dirname(os.path.abspath(path)), manifest["blob"]), "rb") as fh:
        blob = fh.read()
    digest = "sha256:" + hashlib.sha256(blob).hexdigest()
    if digest != manifest.get("blob_digest"):
        raise CorruptionError(f"checkpoint blob digest mismatch for {path}")
    arrays = {}
    offset = 0
    for spec in manifest["tensors"]:
        shape = tuple(spec["shape"])
        size = int(np.prod(shape)) * 4
        chunk = blob[offset : offset + size]
        if len(chunk) != size:
            raise CorruptionError("checkpoint blob truncated")
        arrays[spec["name"]] = np.frombuffer(chunk, dtype="<f4").reshape(shape).astype(float)
        offset += size
    if offset != len(blob):
        raise CorruptionError("checkpoint blob has trailing bytes")
    try:
        h = manifest["hidden_dim"]
        w_gates = np.concatenate(
            [arrays["w_i"], arrays["w_f"], arrays["w_c"], arrays["w_o"]], axis=1
        )
        b_gates = np.concatenate(
            [arrays["b_i"], arrays["b_f"], arrays["b_c"], arrays["b_o"]]
        )
        params = NetworkParameters(
            w_gates=w_gates,
            b_gates=b_gates,
            w_out=arrays["w_out"],
            b_out=arrays["b_out"],
            head=Head(manifest["head"]),
            input_dim=int(manifest["input_dim"]),
            input_offset=float(manifest.get("input_offset", 0.0)),
        )
        if params.hidden_dim != h:
            raise ValidationError("checkpoint hidden_dim inconsistent with tensors")
    except KeyError as exc:
        raise CorruptionError(f"checkpoint manifest missing tensor {exc}") from exc
    return params, manifest
