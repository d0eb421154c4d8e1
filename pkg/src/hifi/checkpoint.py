"""Self-describing checkpoint files.

Layout (all text is UTF-8, one item per line)::

    HIFI-CHECKPOINT 1
    sha256 <hex digest of everything after this line>
    [config]
    key=value
    ...
    [tensors]
    <name> <dtype> <dim0>x<dim1>... <nbytes>
    ...
    [end]
    <raw little-endian tensor bytes, in table order>

``dtype`` is ``f4`` (float32) or ``f8`` (float64); each tensor is stored in
the dtype it had, so a round trip is bit-exact. Names under ``extra.`` hold
non-parameter arrays (e.g. the fitted normalizer).
"""
from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Mapping, Optional

import numpy as np
import torch

from .model import ConfigError, HifiConfig, HifiModel

MAGIC = "HIFI-CHECKPOINT 1"
_DTYPES = {"f4": "<f4", "f8": "<f8"}


class CheckpointError(RuntimeError):
    """Corrupt, truncated or incompatible checkpoint."""


def _dtype_tag(arr: np.ndarray) -> str:
    if arr.dtype == np.float64:
        return "f8"
    return "f4"


def save_checkpoint(params: Mapping[str, torch.Tensor], config: HifiConfig, path: str | Path,
                    extras: Optional[Mapping[str, np.ndarray]] = None) -> Path:
    path = Path(path)
    arrays: list[tuple[str, np.ndarray]] = []
    for name, t in params.items():
        arr = t.detach().cpu().numpy() if isinstance(t, torch.Tensor) else np.asarray(t)
        arrays.append((name, arr))
    for name, arr in (extras or {}).items():
        arrays.append((f"extra.{name}", np.asarray(arr, dtype=np.float64)))

    lines = ["[config]"]
    lines += [f"{k}={v}" for k, v in config.to_dict().items()]
    lines.append("[tensors]")
    blobs = []
    for name, arr in arrays:
        tag = _dtype_tag(arr)
        blob = np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes()
        shape = "x".join(str(s) for s in arr.shape) or "scalar"
        lines.append(f"{name} {tag} {shape} {len(blob)}")
        blobs.append(blob)
    lines.append("[end]")
    body = ("\n".join(lines) + "\n").encode() + b"".join(blobs)
    digest = hashlib.sha256(body).hexdigest()

    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(f"{MAGIC}\nsha256 {digest}\n".encode())
        fh.write(body)
    tmp.replace(path)
    return path


def read_checkpoint(path: str | Path) -> tuple[dict[str, torch.Tensor], HifiConfig, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    head, sep, rest = data.partition(b"\n")
    if head.decode(errors="replace") != MAGIC:
        raise CheckpointError(f"{path}: not a HIFI checkpoint")
    sum_line, _, body = rest.partition(b"\n")
    parts = sum_line.decode(errors="replace").split()
    if len(parts) != 2 or parts[0] != "sha256":
        raise CheckpointError(f"{path}: missing checksum line")
    if hashlib.sha256(body).hexdigest() != parts[1]:
        raise CheckpointError(f"{path}: checksum mismatch (file truncated or corrupted)")

    end_marker = b"[end]\n"
    cut = body.find(end_marker)
    if cut < 0:
        raise CheckpointError(f"{path}: header has no [end] marker")
    header = body[:cut].decode().splitlines()
    payload = body[cut + len(end_marker):]
    section = None
    cfg_values: dict[str, str] = {}
    table = []
    for line in header:
        if line in ("[config]", "[tensors]"):
            section = line
        elif section == "[config]":
            key, _, value = line.partition("=")
            cfg_values[key] = value
        elif section == "[tensors]":
            name, tag, shape, nbytes = line.split()
            dims = () if shape == "scalar" else tuple(int(s) for s in shape.split("x"))
            table.append((name, tag, dims, int(nbytes)))
    config = HifiConfig.from_dict(cfg_values)

    params: dict[str, torch.Tensor] = {}
    extras: dict[str, np.ndarray] = {}
    offset = 0
    for name, tag, dims, nbytes in table:
        native = np.float32 if tag == "f4" else np.float64
        if offset + nbytes > len(payload):
            raise CheckpointError(f"{path}: tensor {name} extends past end of file")
        arr = np.frombuffer(payload, dtype=_DTYPES[tag], count=nbytes // np.dtype(native).itemsize,
                            offset=offset).reshape(dims).astype(native)
        offset += nbytes
        if name.startswith("extra."):
            extras[name[len("extra."):]] = arr
        else:
            params[name] = torch.from_numpy(arr.copy())
    return params, config, extras


def load_checkpoint(path: str | Path, expected: Optional[HifiConfig] = None) -> tuple[dict[str, torch.Tensor], HifiConfig]:
    """Load parameters and config; with ``expected``, check every tensor shape against it."""
    params, config, _ = read_checkpoint(path)
    if expected is not None:
        reference = dict(HifiModel(expected).named_parameters())
        for name, ref in reference.items():
            if name not in params:
                raise CheckpointError(f"{path}: parameter {name} missing for the expected config")
            if tuple(params[name].shape) != tuple(ref.shape):
                raise CheckpointError(
                    f"{path}: shape mismatch at {name}: checkpoint {tuple(params[name].shape)}, "
                    f"config expects {tuple(ref.shape)}")
        extra = sorted(set(params) - set(reference))
        if extra:
            raise CheckpointError(f"{path}: unexpected parameters for the expected config: {extra}")
        config = expected
    return params, config


def model_from_checkpoint(path: str | Path) -> tuple[HifiModel, dict[str, np.ndarray]]:
    params, config, extras = read_checkpoint(path)
    model = HifiModel(config)
    dtype = next(iter(params.values())).dtype
    model.to(dtype)
    try:
        model.load_state_dict(params, strict=True)
    except RuntimeError as exc:
        raise ConfigError(f"{path}: checkpoint does not match its own config: {exc}") from None
    model.eval()
    return model, extras
