"""Versioned ``.npz`` checkpoints for dense networks.

Arrays are stored verbatim so a save/load cycle is bit-exact.  A JSON
``meta`` entry records the layout version, layer activations and dropout,
and any caller-supplied metadata.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

from .nn import DenseLayer, DenseNetwork

FORMAT = "tabncd-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save(path, networks, meta=None):
    """Write named networks (``{"encoder": net, ...}``) to ``path``."""
    layout = {}
    arrays = {}
    for name, net in networks.items():
        layers = []
        for i, layer in enumerate(net.layers):
            w_key, b_key = f"{name}.{i}.weights", f"{name}.{i}.bias"
            arrays[w_key] = layer.weights
            arrays[b_key] = layer.bias
            layers.append({
                "fan_in": layer.fan_in,
                "fan_out": layer.fan_out,
                "activation": layer.activation.value,
                "dropout_rate": layer.dropout_rate,
            })
        layout[name] = layers
    header = {"format": FORMAT, "version": VERSION, "networks": layout, "meta": meta or {}}
    arrays["__meta__"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    # write via buffer so the file name is not rewritten with a .npz suffix
    path.write_bytes(buf.getvalue())
    return path


def load(path, rng=None):
    """Return ``(networks, meta)``; networks come back in eval mode."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"{path}: checkpoint not found")
    with np.load(path, allow_pickle=False) as data:
        if "__meta__" not in data:
            raise CheckpointError(f"{path}: not a {FORMAT} file")
        header = json.loads(bytes(data["__meta__"]).decode())
        if header.get("format") != FORMAT:
            raise CheckpointError(f"{path}: not a {FORMAT} file")
        if header.get("version") != VERSION:
            raise CheckpointError(f"{path}: unsupported version {header.get('version')}")
        rng = rng if rng is not None else np.random.default_rng()
        networks = {}
        for name, layers in header["networks"].items():
            built = []
            for i, spec in enumerate(layers):
                w = data[f"{name}.{i}.weights"].copy()
                b = data[f"{name}.{i}.bias"].copy()
                if w.shape != (spec["fan_in"], spec["fan_out"]):
                    raise CheckpointError(f"{path}: {name} layer {i} shape mismatch")
                built.append(DenseLayer(w, b, spec["activation"], spec["dropout_rate"]))
            networks[name] = DenseNetwork(built, rng).eval()
    return networks, header["meta"]
