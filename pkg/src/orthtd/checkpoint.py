"""Self-describing checkpoint container.

Layout: magic bytes ``OTD1``, a 4-byte little-endian header length, a JSON
header (format version, model/schema/vitals configs, named entries with
shapes and byte offsets, optimizer step, seed), then the concatenated
little-endian float32 payloads. Storing the configs makes a checkpoint
loadable without the original experiment file.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .cohort import FeatureSchema
from .errors import CheckpointError
from .vitals import VitalFeatureSpec

MAGIC = b"OTD1"
FORMAT_VERSION = 1


def save_checkpoint(
    model: nn.Module,
    path: str | Path,
    schema: FeatureSchema,
    model_config,
    vitals_spec: VitalFeatureSpec,
    optimizer=None,
    schedule_step: int = 0,
    seed: int = 0,
) -> None:
    """``schema`` must be the vital-augmented schema the model was built on."""
    entries = []
    blobs = []
    offset = 0

    def add(name: str, kind: str, tensor: torch.Tensor):
        nonlocal offset
        data = tensor.detach().to(torch.float32).numpy().astype("<f4").tobytes()
        entries.append(
            {"name": name, "kind": kind, "shape": list(tensor.shape), "offset": offset}
        )
        blobs.append(data)
        offset += len(data)

    for name, p in model.named_parameters():
        add(name, "param", p)
    opt_step = 0
    if optimizer is not None:
        opt_step = optimizer.step_count
        for name in optimizer.exp_avg:
            add(name, "adam_m", optimizer.exp_avg[name])
            add(name, "adam_v", optimizer.exp_avg_sq[name])

    header = {
        "version": FORMAT_VERSION,
        "strategy": model.strategy,
        "task_names": list(model.task_names),
        "model": model_config.to_dict(),
        "schema": schema.to_dict(),
        "vitals": vitals_spec.to_dict(),
        "entries": entries,
        "optimizer_step": opt_step,
        "schedule_step": schedule_step,
        "seed": seed,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def read_header(path: str | Path) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes (not an OTD1 checkpoint)")
    if len(raw) < 8:
        raise CheckpointError(f"{path}: truncated before header length")
    (header_len,) = struct.unpack("<I", raw[4:8])
    header_end = 8 + header_len
    if len(raw) < header_end:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[8:header_end].decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CheckpointError(f"{path}: unreadable header ({e})") from e
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {header.get('version')} != supported {FORMAT_VERSION}"
        )
    return header, raw[header_end:]


def _entry_array(entry: dict, payload: bytes, path) -> np.ndarray:
    numel = int(np.prod(entry["shape"])) if entry["shape"] else 1
    start = entry["offset"]
    end = start + 4 * numel
    if end > len(payload):
        raise CheckpointError(
            f"{path}: truncated payload for entry {entry['name']!r} "
            f"(need {end} bytes, have {len(payload)})"
        )
    return np.frombuffer(payload[start:end], dtype="<f4").reshape(entry["shape"])


def load_into(model: nn.Module, path: str | Path, strict_extra: bool = True) -> dict:
    """Copy stored parameters into an existing model, checking shapes."""
    header, payload = read_header(path)
    params = dict(model.named_parameters())
    stored = {e["name"]: e for e in header["entries"] if e["kind"] == "param"}
    for name, p in params.items():
        entry = stored.get(name)
        if entry is None:
            raise CheckpointError(f"{path}: checkpoint has no entry for parameter {name!r}")
        if list(p.shape) != list(entry["shape"]):
            raise CheckpointError(
                f"{path}: shape mismatch for parameter {name!r}: "
                f"model {list(p.shape)} vs checkpoint {entry['shape']}"
            )
        arr = _entry_array(entry, payload, path)
        with torch.no_grad():
            p.copy_(torch.from_numpy(arr.copy()).to(p.dtype))
    if strict_extra:
        extra = set(stored) - set(params)
        if extra:
            raise CheckpointError(f"{path}: checkpoint has unknown parameters {sorted(extra)}")
    return header


def load_checkpoint(path: str | Path):
    """Rebuild the model described by the header and load its parameters.

    Returns (model, augmented_schema, model_config, vitals_spec, header).
    """
    from .strategies import ModelConfig, build_strategy

    header, _payload = read_header(path)
    schema = FeatureSchema.from_dict(header["schema"])
    model_config = ModelConfig.from_dict(header["model"])
    vitals_spec = VitalFeatureSpec.from_dict(header["vitals"])
    model = build_strategy(schema, model_config)
    load_into(model, path)
    return model, schema, model_config, vitals_spec, header
