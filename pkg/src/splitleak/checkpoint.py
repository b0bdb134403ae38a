"""Versioned parameter snapshots that round-trip bit-exactly."""

import hashlib
import io
import json

import numpy as np

from .nn import ClientModel, DenseStack, ServerModel
from .schema import FeatureSchema

FORMAT_VERSION = 1


def schema_hash(schema: FeatureSchema) -> str:
    return hashlib.sha256(schema.to_text().encode()).hexdigest()[:16]


def save(path, server: ServerModel, client: ClientModel, extra=None):
    """Write both model halves (parameters, scalers, schema) to one file."""
    schema = server.schema
    meta = {
        "version": FORMAT_VERSION,
        "schema": schema.to_text(),
        "schema_hash": schema_hash(schema),
        "embed_dim": server.embed_dim,
        "cut_width": server.cut_width,
        "server_layers": len(server.trunk.weights),
        "client_layers": len(client.head.weights),
        "scalers": {k: list(v) for k, v in server.scalers.items()},
        "server_activations": server.trunk.activations,
        "client_activations": client.head.activations,
        "extra": extra or {},
    }
    arrays = {"__meta__": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for k, v in server.params().items():
        arrays[f"server/{k}"] = v
    for k, v in client.params().items():
        arrays[f"client/{k}"] = v
    buf = io.BytesIO()
    np.savez(buf, **{k.replace("/", "|"): v for k, v in arrays.items()})
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load(path):
    """Reconstruct (ServerModel, ClientModel, extra) from a checkpoint file."""
    with np.load(path) as npz:
        arrays = {k.replace("|", "/"): npz[k] for k in npz.files}
    meta = json.loads(bytes(arrays.pop("__meta__")).decode())
    if meta["version"] != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta['version']}")
    schema = FeatureSchema.parse(meta["schema"])

    def stack(prefix, n_layers, activations):
        ws = [arrays[f"{prefix}/W{i}"] for i in range(n_layers)]
        bs = [arrays[f"{prefix}/b{i}"] for i in range(n_layers)]
        return DenseStack(ws, bs, activations)

    scalers = {k: tuple(v) for k, v in meta["scalers"].items()}
    server_emb = {s.name: arrays[f"server/emb/{s.name}"]
                  for s in schema.server_categorical}
    client_emb = {s.name: arrays[f"client/emb/{s.name}"]
                  for s in schema.client_features}
    server = ServerModel(
        schema, server_emb, scalers,
        stack("server/trunk", meta["server_layers"], meta["server_activations"]),
        meta["embed_dim"])
    client = ClientModel(
        schema, client_emb,
        stack("client/head", meta["client_layers"], meta["client_activations"]),
        meta["cut_width"], meta["embed_dim"])
    return server, client, meta["extra"]
