"""
Checkpoint files: flat 'key = value' text, one entry per line.

    format = snn-checkpoint/1
    model = glm
    hyper.tau_mem = 20.0
    neurons = 3
    exogenous = 1
    visible = 0
    hidden = 1,2
    layers =
    meta.examples_seen = 5000
    bias 0 = 0.0
    weight in:0 -> 1 = 0.4213...

Floats are written with repr() so a load returns bit-identical values. The topology
is stored with the weights; edges keep the order in which they were written.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from core.error_handler import CheckpointError, SnnError
from core.utils import atomic_write_text, format_float
from utils.network import HyperParams, Parameters
from utils.topology import Topology, build_topology

logger = logging.getLogger(__name__)


FORMAT_TAG = "snn-checkpoint/1"
_REQUIRED = ("format", "model", "neurons", "exogenous", "visible", "hidden")


@dataclass
class Checkpoint:
    model: str
    topology: Topology
    hyper: HyperParams
    params: Parameters
    meta: Dict[str, str] = field(default_factory=dict)


def _join(indices) -> str:
    return ",".join(str(int(i)) for i in indices)


def save_checkpoint(path: str, checkpoint: Checkpoint) -> None:
    topology, params = checkpoint.topology, checkpoint.params
    params.check(topology)
    lines = [f"format = {FORMAT_TAG}", f"model = {checkpoint.model}"]
    lines += [f"hyper.{name} = {format_float(value)}" for name, value in checkpoint.hyper.as_dict().items()]
    lines += [
        f"neurons = {topology.neuron_count}",
        f"exogenous = {topology.exogenous_count}",
        f"visible = {_join(topology.visible)}",
        f"hidden = {_join(topology.hidden)}",
        f"layers = {';'.join(_join(layer) for layer in topology.layers)}",
    ]
    lines += [f"meta.{key} = {value}" for key, value in sorted(checkpoint.meta.items())]
    lines += [f"bias {i} = {format_float(b)}" for i, b in enumerate(params.biases)]
    lines += [f"weight {topology.source_label(j)} -> {i} = {format_float(w)}"
              for (j, i), w in zip(topology.edges, params.weights)]
    atomic_write_text(path, "\n".join(lines) + "\n")
    logger.debug(f"Saved checkpoint with {topology.edge_count} weights to {path}")


def _split_indices(text: str, offset: int) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CheckpointError(f"Malformed index list {text!r}", offset)


def _parse_float(text: str, offset: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise CheckpointError(f"Malformed number {text!r}", offset)


def load_checkpoint(path: str) -> Checkpoint:
    """
    Read a checkpoint written by save_checkpoint.

    Raises:
        CheckpointError: unreadable file or malformed entry, with the byte offset of
            the offending line (end of file for missing keys)
    """
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}")

    header: Dict[str, Tuple[str, int]] = {}
    meta: Dict[str, str] = {}
    hyper: Dict[str, float] = {}
    biases: Dict[int, float] = {}
    edges: List[Tuple[str, str, float, int]] = []

    offset = 0
    for raw in data.splitlines(keepends=True):
        line_offset, offset = offset, offset + len(raw)
        try:
            line = raw.decode("utf-8").strip()
        except UnicodeDecodeError:
            raise CheckpointError("Checkpoint line is not valid UTF-8", line_offset)
        if not line or line.startswith("#"):
            continue
        if " = " not in line and not line.endswith(" ="):
            raise CheckpointError(f"Expected 'key = value', got {line[:60]!r}", line_offset)
        key, _, value = line.partition(" =")
        key, value = key.strip(), value.strip()

        if key.startswith("weight "):
            parts = key[len("weight "):].split(" -> ")
            if len(parts) != 2:
                raise CheckpointError(f"Malformed weight key {key!r}", line_offset)
            edges.append((parts[0].strip(), parts[1].strip(), _parse_float(value, line_offset), line_offset))
        elif key.startswith("bias "):
            try:
                index = int(key[len("bias "):])
            except ValueError:
                raise CheckpointError(f"Malformed bias key {key!r}", line_offset)
            biases[index] = _parse_float(value, line_offset)
        elif key.startswith("hyper."):
            hyper[key[len("hyper."):]] = _parse_float(value, line_offset)
        elif key.startswith("meta."):
            meta[key[len("meta."):]] = value
        elif key in _REQUIRED or key == "layers":
            header[key] = (value, line_offset)
        else:
            raise CheckpointError(f"Unknown checkpoint key {key!r}", line_offset)

    missing = [k for k in _REQUIRED if k not in header]
    if missing:
        raise CheckpointError(f"Checkpoint is missing {missing}", len(data))
    if header["format"][0] != FORMAT_TAG:
        raise CheckpointError(f"Unsupported checkpoint format {header['format'][0]!r}", header["format"][1])

    layers_text, layers_offset = header.get("layers", ("", 0))
    spec = {
        "generator": "explicit",
        "neurons": int(_parse_float(header["neurons"][0], header["neurons"][1])),
        "exogenous": int(_parse_float(header["exogenous"][0], header["exogenous"][1])),
        "visible": _split_indices(header["visible"][0], header["visible"][1]),
        "hidden": _split_indices(header["hidden"][0], header["hidden"][1]),
        "edges": [[src, int(dst) if dst.isdigit() else dst] for src, dst, _, _ in edges],
        "layers": [_split_indices(part, layers_offset) for part in layers_text.split(";") if part.strip()],
    }
    try:
        topology = build_topology(spec)
        hyper_params = HyperParams.from_dict(hyper)
    except SnnError as e:
        raise CheckpointError(f"Invalid checkpoint contents: {e}", edges[0][3] if edges else len(data))

    if sorted(biases) != list(range(topology.neuron_count)):
        raise CheckpointError(f"Expected one bias per neuron (0..{topology.neuron_count - 1})", len(data))
    params = Parameters(np.array([w for _, _, w, _ in edges], dtype=float),
                        np.array([biases[i] for i in range(topology.neuron_count)], dtype=float))
    return Checkpoint(header["model"][0], topology, hyper_params, params, meta)
