"""Versioned binary checkpoints.

Layout (all little-endian):

    8s   magic  b"DBNCKPT\\0"
    B    format version (currently 1)
    32s  sha-256 digest of the resolved experiment config (zeros if unset)
    Q    training seed
    I    length of the embedded model-config JSON
    ...  model-config JSON (utf-8), enough to rebuild the architecture
    I    tensor count
    per tensor:
        H + utf-8 name, B dtype tag (0=f32 1=f64 2=i64), B ndim, I*ndim dims,
        raw data
    I    crc32 of every preceding byte

A checkpoint with any other version byte is refused, never reinterpreted.
Tensors cover: every unique parameter, both branches' BN running stats
and update counts, and the train-split standardization stats, so
`load(save(net))` reproduces forward outputs bit-identically.
"""

import io
import json
import struct
import zlib

import numpy as np

from .batchnorm import BRANCHES, BnMode
from .errors import CheckpointError
from .model import ModelConfig, Network

MAGIC = b"DBNCKPT\x00"
VERSION = 1
_DTYPES = {0: np.float32, 1: np.float64, 2: np.int64}
_TAGS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1, np.dtype(np.int64): 2}


def config_digest(resolved_config: dict) -> bytes:
    import hashlib
    blob = json.dumps(resolved_config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).digest()


def _model_config_json(cfg: ModelConfig) -> str:
    return json.dumps({
        "depth": cfg.depth, "width": cfg.width, "in_channels": cfg.in_channels,
        "num_classes": cfg.num_classes, "bn_mode": cfg.bn_mode.value,
        "bn_momentum": cfg.bn_momentum, "bn_eps": cfg.bn_eps,
    }, sort_keys=True)


def _model_config_from_json(blob: str) -> ModelConfig:
    d = json.loads(blob)
    return ModelConfig(depth=d["depth"], width=d["width"], in_channels=d["in_channels"],
                       num_classes=d["num_classes"], bn_mode=BnMode(d["bn_mode"]),
                       bn_momentum=d["bn_momentum"], bn_eps=d["bn_eps"])


def _named_tensors(net: Network):
    """Deterministic (name, array) sequence covering all restorable state."""
    out = [(p.name, p.value) for p in net.params()]
    for bn in net.bn_layers():
        for br in BRANCHES:
            tag = f"{bn.name}.{br.value}"
            out.append((f"{tag}.running_mean", bn.running_mean(br)))
            out.append((f"{tag}.running_var", bn.running_var(br)))
            out.append((f"{tag}.count", np.array([bn.update_count(br)], dtype=np.int64)))
    out.append(("stand.mean", np.asarray(net.stand_mean, dtype=np.float64)))
    out.append(("stand.std", np.asarray(net.stand_std, dtype=np.float64)))
    return out


def _write_tensor(buf, name: str, arr: np.ndarray):
    raw = name.encode()
    buf.write(struct.pack("<H", len(raw)))
    buf.write(raw)
    tag = _TAGS.get(arr.dtype)
    if tag is None:
        raise CheckpointError(f"tensor '{name}' has unsupported dtype {arr.dtype}")
    buf.write(struct.pack("<BB", tag, arr.ndim))
    buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    buf.write(np.ascontiguousarray(arr).astype(arr.dtype, copy=False).tobytes())


def save_checkpoint(net: Network, path, seed: int = 0, digest: bytes = b""):
    digest = (digest or b"").ljust(32, b"\x00")[:32]
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<B", VERSION))
    buf.write(digest)
    buf.write(struct.pack("<Q", seed))
    blob = _model_config_json(net.config).encode()
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    tensors = _named_tensors(net)
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors:
        _write_tensor(buf, name, arr)
    body = buf.getvalue()
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body)))


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated at byte {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path):
    """Rebuild the network and its full state; returns (net, meta dict)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(MAGIC) + 1 + 4:
        raise CheckpointError(f"{path}: too short to be a checkpoint")
    (stored_crc,) = struct.unpack("<I", data[-4:])
    body = data[:-4]
    if zlib.crc32(body) != stored_crc:
        raise CheckpointError(f"{path}: checksum mismatch, file corrupt")
    rd = _Reader(body, path)
    if rd.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint")
    (version,) = rd.unpack("<B")
    if version != VERSION:
        raise CheckpointError(
            f"{path}: format version {version} not supported (expected {VERSION}); "
            "refusing to reinterpret")
    digest = rd.take(32)
    (seed,) = rd.unpack("<Q")
    (blob_len,) = rd.unpack("<I")
    cfg = _model_config_from_json(rd.take(blob_len).decode())
    (n_tensors,) = rd.unpack("<I")
    tensors = {}
    for _ in range(n_tensors):
        (name_len,) = rd.unpack("<H")
        name = rd.take(name_len).decode()
        tag, ndim = rd.unpack("<BB")
        if tag not in _DTYPES:
            raise CheckpointError(f"{path}: tensor '{name}' has unknown dtype tag {tag}")
        shape = rd.unpack(f"<{ndim}I")
        dtype = np.dtype(_DTYPES[tag])
        count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        arr = np.frombuffer(rd.take(count * dtype.itemsize), dtype=dtype).reshape(shape)
        tensors[name] = arr.copy()
    if rd.pos != len(body):
        raise CheckpointError(f"{path}: {len(body) - rd.pos} trailing bytes")

    net = Network(cfg, seed=0)
    params = net.param_dict()
    for name, p in params.items():
        if name not in tensors:
            raise CheckpointError(f"{path}: missing tensor '{name}'")
        if tensors[name].shape != p.value.shape:
            raise CheckpointError(
                f"{path}: tensor '{name}' shape {tensors[name].shape} != {p.value.shape}")
        p.value[...] = tensors[name]
    for bn in net.bn_layers():
        for br in BRANCHES:
            tag = f"{bn.name}.{br.value}"
            bn.load_stats(br, tensors[f"{tag}.running_mean"],
                          tensors[f"{tag}.running_var"], tensors[f"{tag}.count"][0])
    net.stand_mean = tensors["stand.mean"].astype(np.float64)
    net.stand_std = tensors["stand.std"].astype(np.float64)
    meta = {"seed": seed, "digest": digest, "version": version}
    return net, meta
