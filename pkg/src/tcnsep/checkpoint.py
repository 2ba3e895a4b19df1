"""Single-file checkpoint container.

Layout: one UTF-8 JSON header line (format tag, step, run config snapshot,
RNG state, optimizer metadata, and a tensor key table with byte offsets),
then the raw tensor data as little-endian float32 blobs in table order.
Offsets are relative to the first byte after the header newline, so the
header never depends on its own length. Parameters are stored under their
module-path names; optimizer moments under "optim.<slot>.<name>".

Reloading restores parameters bitwise (they are float32 on both sides), so a
restored model reproduces forward outputs exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

FORMAT_TAG = "tcnsep-checkpoint"
FORMAT_VERSION = 1

_OPTIM_SLOTS = ("exp_avg", "exp_avg_sq")


def _tensor_blob(t: torch.Tensor) -> np.ndarray:
    return t.detach().cpu().to(torch.float32).numpy().astype("<f4", copy=False).ravel()


def _optimizer_entries(optimizer: torch.optim.Optimizer, model: nn.Module):
    """Yield (key, tensor) moment pairs plus a {name: step_count} dict."""
    param_names = {id(p): name for name, p in model.named_parameters()}
    moments: list[tuple[str, torch.Tensor]] = []
    step_counts: dict[str, float] = {}
    for param, state in optimizer.state.items():
        name = param_names.get(id(param))
        if name is None:
            raise ValueError("optimizer tracks a parameter that is not in the model")
        if "step" in state:
            step_counts[name] = float(state["step"])
        for slot in _OPTIM_SLOTS:
            if slot in state:
                moments.append((f"optim.{slot}.{name}", state[slot]))
    return moments, step_counts


def save_checkpoint(
    path,
    model: nn.Module,
    step: int,
    config: dict | None = None,
    optimizer: torch.optim.Optimizer | None = None,
    numpy_rng_state: dict | None = None,
) -> None:
    """Write model (and optionally optimizer) state to ``path``."""
    entries: list[tuple[str, torch.Tensor]] = list(model.named_parameters())
    entries += [(f"buffer.{name}", buf) for name, buf in model.named_buffers()]
    optim_meta: dict | None = None
    if optimizer is not None:
        moments, step_counts = _optimizer_entries(optimizer, model)
        entries += moments
        optim_meta = {
            "type": type(optimizer).__name__.lower(),
            "step_counts": step_counts,
            "param_groups": [
                {k: v for k, v in group.items() if k != "params"}
                for group in optimizer.param_groups
            ],
        }

    table = []
    offset = 0
    blobs = []
    for key, tensor in entries:
        blob = _tensor_blob(tensor)
        table.append({"key": key, "shape": list(tensor.shape), "offset": offset})
        offset += blob.nbytes
        blobs.append(blob)

    header = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "step": int(step),
        "config": config,
        "rng": {
            "torch": torch.get_rng_state().numpy().tobytes().hex(),
            "numpy": numpy_rng_state,
        },
        "optimizer": optim_meta,
        "tensors": table,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        for blob in blobs:
            fh.write(blob.tobytes())


@dataclass(frozen=True)
class CheckpointData:
    """Parsed checkpoint: header metadata plus tensors keyed as saved."""

    header: dict
    tensors: dict

    @property
    def step(self) -> int:
        return int(self.header["step"])

    @property
    def config(self) -> dict | None:
        return self.header.get("config")

    def parameter_tensors(self) -> dict:
        return {
            k: v
            for k, v in self.tensors.items()
            if not k.startswith("optim.") and not k.startswith("buffer.")
        }


def load_checkpoint(path) -> CheckpointData:
    """Parse a checkpoint file into header metadata and float32 arrays."""
    raw = Path(path).read_bytes()
    newline = raw.index(b"\n")
    header = json.loads(raw[:newline].decode("utf-8"))
    if header.get("format") != FORMAT_TAG:
        raise ValueError(f"{path} is not a {FORMAT_TAG} file")
    data_start = newline + 1
    tensors = {}
    for item in header["tensors"]:
        shape = tuple(item["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=data_start + item["offset"])
        tensors[item["key"]] = arr.reshape(shape).copy()
    return CheckpointData(header, tensors)


def restore_model(model: nn.Module, ckpt: CheckpointData) -> None:
    """Load saved parameters (and buffers) into ``model`` in place."""
    state = {}
    for key, arr in ckpt.tensors.items():
        if key.startswith("optim."):
            continue
        name = key[len("buffer.") :] if key.startswith("buffer.") else key
        state[name] = torch.from_numpy(arr)
    model.load_state_dict(state, strict=True)


def restore_optimizer(
    optimizer: torch.optim.Optimizer, model: nn.Module, ckpt: CheckpointData
) -> None:
    """Fill optimizer moment/step state for a freshly built optimizer whose
    parameter order matches ``model.parameters()``."""
    meta = ckpt.header.get("optimizer")
    if meta is None:
        raise ValueError("checkpoint holds no optimizer state")
    params = dict(model.named_parameters())
    step_counts = meta.get("step_counts", {})
    for name, param in params.items():
        slots = {
            slot: ckpt.tensors.get(f"optim.{slot}.{name}") for slot in _OPTIM_SLOTS
        }
        if all(v is None for v in slots.values()):
            continue
        state = optimizer.state.setdefault(param, {})
        if name in step_counts:
            state["step"] = torch.tensor(float(step_counts[name]))
        for slot, arr in slots.items():
            if arr is not None:
                state[slot] = torch.from_numpy(arr.copy())
    saved_groups = meta.get("param_groups")
    if saved_groups and len(saved_groups) == len(optimizer.param_groups):
        for group, saved in zip(optimizer.param_groups, saved_groups):
            for key, value in saved.items():
                if key in group:
                    group[key] = value


def torch_rng_state_from(ckpt: CheckpointData) -> torch.Tensor | None:
    hex_state = (ckpt.header.get("rng") or {}).get("torch")
    if not hex_state:
        return None
    return torch.from_numpy(np.frombuffer(bytes.fromhex(hex_state), dtype=np.uint8).copy())
