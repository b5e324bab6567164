"""
On-disk cache of modes and coupling tensors.

A file is a plain-text header followed by a raw payload of little-endian
float64 arrays::

    cavityflow-cache
    format_version = 1
    params_hash = <sha256 of the canonical parameter JSON>
    params = <canonical parameter JSON>
    solid_lambda = <three floats or none>
    labels = <family:l:m:rank ...>
    arrays = eigenvalues:48 coeffs:120x48 ...
    payload_sha256 = <sha256 of the payload bytes>
    end

The payload follows the ``end`` line directly.
"""

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

from .ball_basis import Family
from .coupling import CouplingTensors, InertiaSpec
from .errors import CacheError
from .stokes_modes import ModeSet

__all__ = ["FORMAT_VERSION", "CacheEntry", "cache_load", "cache_path", "cache_store", "params_hash"]

FORMAT_VERSION = 1
_MAGIC = "cavityflow-cache"
_END = b"\nend\n"
_ARRAYS = ("eigenvalues", "coeffs", "lambdas", "m", "P", "T", "D", "B")
_LE = np.dtype("<f8")


def _canonical(params):
    return json.dumps(params, sort_keys=True, separators=(",", ":"), allow_nan=False)


def params_hash(params):
    """SHA-256 hex digest of the canonical JSON form of ``params``."""
    return hashlib.sha256(_canonical(params).encode("utf-8")).hexdigest()


def cache_path(cache_dir, params):
    return Path(cache_dir) / f"{params_hash(params)[:24]}.cfcache"


@dataclass(eq=False)
class CacheEntry:
    """Everything needed to rebuild a modal system without the basis."""

    params: dict
    modes: ModeSet
    tensors: CouplingTensors
    format_version: int = FORMAT_VERSION

    @property
    def params_hash(self):
        return params_hash(self.params)

    def arrays(self):
        t = self.tensors
        return {
            "eigenvalues": self.modes.eigenvalues,
            "coeffs": self.modes.coeffs,
            "lambdas": np.asarray(t.inertia.lambdas, dtype=float),
            "m": t.m,
            "P": t.P,
            "T": t.T,
            "D": t.D,
            "B": t.B,
        }


def _label_token(label, rank):
    fam, l, m = label
    return f"{Family(fam).value}:{l}:{m}:{rank}"


def _parse_label(tok):
    fam, l, m, rank = tok.split(":")
    return (Family(fam), int(l), int(m)), int(rank)


def cache_store(path, entry):
    """Write ``entry`` to ``path`` atomically."""
    arrays = entry.arrays()
    payload = b"".join(np.ascontiguousarray(arrays[k], dtype=_LE).tobytes() for k in _ARRAYS)
    shapes = " ".join(f"{k}:{'x'.join(str(d) for d in np.shape(arrays[k]))}" for k in _ARRAYS)
    labels = " ".join(_label_token(lb, r) for lb, r in zip(entry.modes.labels, entry.modes.radial_order))
    solid = entry.tensors.inertia.solid_lambda
    header = "\n".join([
        _MAGIC,
        f"format_version = {entry.format_version}",
        f"params_hash = {entry.params_hash}",
        f"params = {_canonical(entry.params)}",
        f"solid_lambda = {'none' if solid is None else ' '.join(repr(float(x)) for x in solid)}",
        f"labels = {labels}",
        f"arrays = {shapes}",
        f"payload_sha256 = {hashlib.sha256(payload).hexdigest()}",
    ]).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".cfcache")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header + _END + payload)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def cache_load(path, expected_hash=None):
    """Read a cache file, verifying version, parameter hash and payload.

    Raises
    ------
    CacheError
        Naming the failed check: ``format``, ``version``, ``hash``,
        ``dimensions`` or ``payload``.
    """
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CacheError(f"format: cannot read {path}: {exc.strerror}") from None
    cut = blob.find(_END)
    if cut < 0:
        raise CacheError("format: header terminator not found")
    try:
        lines = blob[:cut].decode("utf-8").split("\n")
    except UnicodeDecodeError:
        raise CacheError("format: header is not valid UTF-8") from None
    payload = blob[cut + len(_END):]
    if not lines or lines[0] != _MAGIC:
        raise CacheError("format: not a cavityflow cache file")
    head = {}
    for line in lines[1:]:
        key, sep, value = line.partition(" = ")
        if not sep:
            raise CacheError(f"format: malformed header line {line!r}")
        head[key] = value
    for key in ("format_version", "params_hash", "params", "solid_lambda", "labels", "arrays", "payload_sha256"):
        if key not in head:
            raise CacheError(f"format: header field {key!r} missing")

    if head["format_version"] != str(FORMAT_VERSION):
        raise CacheError(f"version mismatch: file has {head['format_version']}, expected {FORMAT_VERSION}")
    try:
        params = json.loads(head["params"])
    except json.JSONDecodeError:
        raise CacheError("hash mismatch: parameter record is not valid JSON") from None
    recomputed = params_hash(params)
    if recomputed != head["params_hash"]:
        raise CacheError("hash mismatch: stored parameter hash does not match recomputed hash")
    if expected_hash is not None and recomputed != expected_hash:
        raise CacheError("hash mismatch: cache was built for different parameters")
    if hashlib.sha256(payload).hexdigest() != head["payload_sha256"]:
        raise CacheError("payload: checksum mismatch")

    shapes = {}
    try:
        for tok in head["arrays"].split():
            name, dims = tok.split(":")
            shapes[name] = tuple(int(d) for d in dims.split("x") if d)
    except ValueError:
        raise CacheError("dimensions: malformed array table") from None
    if tuple(shapes) != _ARRAYS:
        raise CacheError("dimensions: unexpected array table")
    sizes = [int(np.prod(shapes[k], dtype=int)) for k in _ARRAYS]
    if sum(sizes) * 8 != len(payload):
        raise CacheError(f"dimensions: payload holds {len(payload)} bytes, header implies {sum(sizes) * 8}")
    n = shapes["eigenvalues"][0] if shapes["eigenvalues"] else 0
    expect = {"coeffs": (shapes["coeffs"][0], n), "lambdas": (3,), "m": (n, 3), "P": (n, n, 3),
              "T": (n, n, n), "D": (n, n, n), "B": (n, n)}
    for k, shp in expect.items():
        if shapes[k] != shp:
            raise CacheError(f"dimensions: array {k} has shape {shapes[k]}, expected {shp}")

    flat = np.frombuffer(payload, dtype=_LE)
    arrays, off = {}, 0
    for k, size in zip(_ARRAYS, sizes):
        arrays[k] = flat[off:off + size].astype(np.float64).reshape(shapes[k])
        off += size

    try:
        parsed = [_parse_label(tok) for tok in head["labels"].split()]
    except ValueError:
        raise CacheError("format: malformed mode labels") from None
    if len(parsed) != n:
        raise CacheError(f"dimensions: {len(parsed)} labels for {n} modes")
    solid = None if head["solid_lambda"] == "none" else tuple(float(x) for x in head["solid_lambda"].split())

    modes = ModeSet(arrays["eigenvalues"], arrays["coeffs"], [p[0] for p in parsed], [p[1] for p in parsed])
    inertia = InertiaSpec(tuple(arrays["lambdas"]), solid)
    B = arrays["B"]
    chol = linalg.cho_factor(B, lower=True) if n else (B, True)
    tensors = CouplingTensors(inertia, arrays["eigenvalues"].copy(), arrays["m"], arrays["P"],
                              arrays["T"], arrays["D"], B, chol)
    return CacheEntry(params, modes, tensors, FORMAT_VERSION)
