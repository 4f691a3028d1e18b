"""Checkpoint file format.

Layout: magic b"DMCK", little-endian u32 version, u32 manifest byte length,
manifest UTF-8 text, then each layer's raw little-endian float32 data in
manifest order.  The manifest carries the model kind, hyperparameter lines
(``h.<key>=<value>``) and one ``layer <name> <d0>x<d1>x...`` line per array.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"DMCK"
VERSION = 1


class CorruptCheckpoint(Exception):
    pass


class VersionMismatch(Exception):
    pass


def save_params(path, params: dict[str, np.ndarray], kind: str,
                hyper: dict | None = None) -> None:
    lines = [f"kind={kind}"]
    for key, value in sorted((hyper or {}).items()):
        lines.append(f"h.{key}={value}")
    for name, arr in params.items():
        dims = "x".join(str(d) for d in arr.shape)
        lines.append(f"layer {name} {dims}")
    manifest = ("\n".join(lines) + "\n").encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(manifest)))
        fh.write(manifest)
        for arr in params.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_params(path) -> tuple[dict[str, np.ndarray], str, dict[str, str]]:
    """Returns (params, kind, hyper).  Raises CorruptCheckpoint on truncated
    or malformed files and VersionMismatch on unknown versions."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise CorruptCheckpoint(f"{path}: bad magic")
    version, mlen = struct.unpack("<II", blob[4:12])
    if version != VERSION:
        raise VersionMismatch(f"{path}: version {version}, expected {VERSION}")
    if len(blob) < 12 + mlen:
        raise CorruptCheckpoint(f"{path}: truncated manifest")
    try:
        manifest = blob[12:12 + mlen].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptCheckpoint(f"{path}: undecodable manifest") from exc

    kind = ""
    hyper: dict[str, str] = {}
    layers: list[tuple[str, tuple[int, ...]]] = []
    for line in manifest.splitlines():
        if not line:
            continue
        if line.startswith("kind="):
            kind = line[5:]
        elif line.startswith("h."):
            key, _, value = line[2:].partition("=")
            hyper[key] = value
        elif line.startswith("layer "):
            try:
                _, name, dims = line.split(" ")
                shape = tuple(int(d) for d in dims.split("x"))
            except ValueError as exc:
                raise CorruptCheckpoint(f"{path}: bad layer line {line!r}") from exc
            layers.append((name, shape))
        else:
            raise CorruptCheckpoint(f"{path}: unrecognized manifest line {line!r}")
    if not kind or not layers:
        raise CorruptCheckpoint(f"{path}: manifest missing kind or layers")

    params: dict[str, np.ndarray] = {}
    pos = 12 + mlen
    for name, shape in layers:
        count = int(np.prod(shape))
        nbytes = 4 * count
        if pos + nbytes > len(blob):
            raise CorruptCheckpoint(f"{path}: truncated data for layer {name}")
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=pos)
        params[name] = arr.reshape(shape).astype(np.float32)
        pos += nbytes
    if pos != len(blob):
        raise CorruptCheckpoint(f"{path}: {len(blob) - pos} trailing bytes")
    return params, kind, hyper
