"""Versioned binary checkpoint for a training run.

Layout: 8-byte magic, little-endian u32 version, u64 header length, a JSON
header (configs, counters, histories, RNG state, array directory), then the
raw little-endian float64 bytes of every array in directory order.
"""
import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .graphlearn import GraphConfig, NodeEmbedding
from .model import StackVAEG
from .nn import AdamState, LinearLayer, TrainHyper
from .stackvae import LAYER_NAMES, StackVaeConfig, StackVaeParams
from .trainer import TrainRun

MAGIC = b"STKVAEG\x00"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


class CheckpointError(ValueError):
    pass


def _arrays(run):
    out = {}
    for name, arr in run.model.named_parameters().items():
        out[f"param/{name}"] = arr
    for name, arr in run.adam.first_moment.items():
        out[f"adam_m/{name}"] = arr
    for name, arr in run.adam.second_moment.items():
        out[f"adam_v/{name}"] = arr
    if run.norm_stats is not None:
        out["norm/min"], out["norm/max"] = run.norm_stats
    if run.model.fixed_adjacency is not None:
        out["fixed_adjacency"] = run.model.fixed_adjacency
    return out


def to_bytes(run):
    arrays = _arrays(run)
    directory = [{"name": k, "shape": list(np.shape(v))} for k, v in arrays.items()]
    payload = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in arrays.values())
    header = {
        "vae_cfg": asdict(run.vae_cfg),
        "graph_cfg": asdict(run.graph_cfg),
        "hyper": asdict(run.hyper),
        "adam": {"step_count": run.adam.step_count, "beta1": run.adam.beta1,
                 "beta2": run.adam.beta2, "epsilon": run.adam.epsilon},
        "seed": run.seed,
        "epoch": run.epoch,
        "loss_history": [list(p) for p in run.loss_history],
        "val_history": list(run.val_history),
        "rng": run.rng.bit_generator.state,
        "val_fraction": run.val_fraction,
        "stride": run.stride,
        "arrays": directory,
        "payload_bytes": len(payload),
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(hbytes)) + hbytes + payload


def save_checkpoint(run, path):
    Path(path).write_bytes(to_bytes(run))


def from_bytes(blob, source="<bytes>"):
    if len(blob) < _PREFIX.size:
        raise CheckpointError(f"{source}: truncated before header")
    magic, version, hlen = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"{source}: bad magic {magic!r}, not a checkpoint")
    if version != VERSION:
        raise CheckpointError(f"{source}: checkpoint version {version}, this build reads {VERSION}")
    start = _PREFIX.size
    if len(blob) < start + hlen:
        raise CheckpointError(f"{source}: truncated inside header")
    try:
        header = json.loads(blob[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{source}: corrupt header ({exc})") from None
    payload = blob[start + hlen:]
    if len(payload) != header["payload_bytes"]:
        raise CheckpointError(f"{source}: payload has {len(payload)} bytes, header says {header['payload_bytes']}")
    arrays = {}
    offset = 0
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        arrays[entry["name"]] = np.frombuffer(payload, dtype="<f8", count=n, offset=offset).astype(np.float64).reshape(shape)
        offset += 8 * n
    return _build_run(header, arrays)


def _build_run(header, arrays):
    vae_cfg = StackVaeConfig(**header["vae_cfg"])
    graph_cfg = GraphConfig(**header["graph_cfg"])
    hyper = TrainHyper(**header["hyper"])
    p = {k[len("param/"):]: v for k, v in arrays.items() if k.startswith("param/")}
    vae = StackVaeParams(*(LinearLayer(p[f"{n}.weight"], p[f"{n}.bias"]) for n in LAYER_NAMES))
    emb = NodeEmbedding(p["graph.E"], LinearLayer(p["graph.proj.weight"], p["graph.proj.bias"]))
    model = StackVAEG(vae_cfg, graph_cfg, vae, emb, arrays.get("fixed_adjacency"))
    a = header["adam"]
    adam = AdamState({k[len("adam_m/"):]: v for k, v in arrays.items() if k.startswith("adam_m/")},
                     {k[len("adam_v/"):]: v for k, v in arrays.items() if k.startswith("adam_v/")},
                     a["step_count"], a["beta1"], a["beta2"], a["epsilon"])
    rng = np.random.default_rng()
    rng.bit_generator.state = header["rng"]
    norm = (arrays["norm/min"], arrays["norm/max"]) if "norm/min" in arrays else None
    return TrainRun(vae_cfg, graph_cfg, hyper, model, adam, rng, header["seed"], header["epoch"],
                    [tuple(h) for h in header["loss_history"]], list(header["val_history"]), norm,
                    header["val_fraction"], header["stride"])


def load_checkpoint(path):
    return from_bytes(Path(path).read_bytes(), str(path))
