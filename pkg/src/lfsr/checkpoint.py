"""Versioned checkpoints: a human-readable JSON manifest plus a raw
little-endian payload of flat arrays.

Layout (one directory per checkpoint):
    manifest.json   format_version, module name, config echo, step counter,
                    rng state, and an array directory name -> (shape, dtype,
                    byte offset, byte count)
    arrays.bin      the arrays, concatenated in manifest order

Round trips are bit-exact; any mismatch between manifest and payload raises
IntegrityError naming the offending array.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError, IntegrityError, UnsupportedVersionError

FORMAT_VERSION = 1


@dataclass
class CheckpointState:
    module: str
    config: dict
    arrays: dict[str, np.ndarray]
    step: int = 0
    rng: dict = field(default_factory=dict)


def save_checkpoint(path, state: CheckpointState) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    directory = {}
    offset = 0
    blobs = []
    for name, arr in state.arrays.items():
        arr = np.asarray(arr)  # tobytes() serializes in C order; 0-d stays 0-d
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        blob = arr.tobytes()
        directory[name] = {
            "shape": list(arr.shape),
            "dtype": arr.dtype.str.replace(">", "<").replace("=", "<"),
            "offset": offset,
            "nbytes": len(blob),
        }
        offset += len(blob)
        blobs.append(blob)
    manifest = {
        "format_version": FORMAT_VERSION,
        "module": state.module,
        "config": state.config,
        "step": state.step,
        "rng": state.rng,
        "arrays": directory,
    }
    (path / "arrays.bin").write_bytes(b"".join(blobs))
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path


def load_checkpoint(path) -> CheckpointState:
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"no checkpoint manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"checkpoint format_version {version} not supported (expected {FORMAT_VERSION})"
        )
    payload = (path / "arrays.bin").read_bytes()
    arrays = {}
    for name, meta in manifest["arrays"].items():
        dtype = np.dtype(meta["dtype"])
        count = int(np.prod(meta["shape"], dtype=np.int64)) if meta["shape"] else 1
        if count * dtype.itemsize != meta["nbytes"]:
            raise IntegrityError(
                f"array {name!r}: shape {meta['shape']} x {dtype} does not match "
                f"{meta['nbytes']} bytes"
            )
        end = meta["offset"] + meta["nbytes"]
        if end > len(payload):
            raise IntegrityError(f"array {name!r}: payload truncated at {len(payload)} bytes")
        flat = np.frombuffer(payload[meta["offset"] : end], dtype=dtype)
        arrays[name] = flat.reshape(meta["shape"]).copy()
    return CheckpointState(
        module=manifest["module"],
        config=manifest["config"],
        arrays=arrays,
        step=manifest.get("step", 0),
        rng=manifest.get("rng", {}),
    )


# ---------------------------------------------------------------------------
# torch bridging


def module_arrays(module: torch.nn.Module, prefix: str = "model") -> dict[str, np.ndarray]:
    return {
        f"{prefix}.{name}": tensor.detach().cpu().numpy()
        for name, tensor in module.state_dict().items()
    }


def load_module_arrays(
    module: torch.nn.Module, arrays: dict[str, np.ndarray], prefix: str = "model"
) -> None:
    state = module.state_dict()
    tensors = {}
    for name, tensor in state.items():
        key = f"{prefix}.{name}"
        if key not in arrays:
            raise ConfigError(f"checkpoint missing array {key!r}")
        arr = arrays[key]
        if tuple(arr.shape) != tuple(tensor.shape):
            raise ConfigError(
                f"checkpoint array {key!r} has shape {tuple(arr.shape)}, "
                f"model expects {tuple(tensor.shape)}"
            )
        tensors[name] = torch.from_numpy(arr.copy()).to(tensor.dtype)
    module.load_state_dict(tensors)


def optimizer_arrays(
    optim: torch.optim.Optimizer, prefix: str = "optim"
) -> tuple[dict[str, np.ndarray], dict]:
    """Split an optimizer state dict into flat arrays plus JSON metadata."""
    sd = optim.state_dict()
    arrays = {}
    for pid, entry in sd["state"].items():
        for key, value in entry.items():
            if isinstance(value, torch.Tensor):
                arrays[f"{prefix}.{pid}.{key}"] = value.detach().cpu().numpy()
    meta = {"param_groups": sd["param_groups"]}
    return arrays, meta


def load_optimizer_arrays(
    optim: torch.optim.Optimizer,
    arrays: dict[str, np.ndarray],
    meta: dict,
    prefix: str = "optim",
) -> None:
    sd = optim.state_dict()
    state: dict = {}
    for name, arr in arrays.items():
        if not name.startswith(prefix + "."):
            continue
        pid, key = name[len(prefix) + 1 :].split(".", 1)
        state.setdefault(int(pid), {})[key] = torch.from_numpy(arr.copy())
    sd["state"] = state
    sd["param_groups"] = meta["param_groups"]
    optim.load_state_dict(sd)


def rng_snapshot(seed: int) -> dict:
    return {
        "base_seed": seed,
        "torch": base64.b64encode(torch.get_rng_state().numpy().tobytes()).decode(),
    }


def params_digest(arrays: dict[str, np.ndarray]) -> str:
    """Stable content hash of parameter arrays (used to key latent caches)."""
    import hashlib

    h = hashlib.sha256()
    for name in sorted(arrays):
        h.update(name.encode())
        h.update(np.ascontiguousarray(arrays[name]).tobytes())
    return h.hexdigest()
