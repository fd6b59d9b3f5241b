"""Binary model checkpoints ("GZRF" format, version 1).

Layout (all integers little-endian):

    magic   4 bytes  b"GZRF"
    version u32
    cfg_len u32, cfg utf-8   model-config echo (config-file section body)
    epoch   u32
    seed    u64
    final_lr f64
    n       u32              named entries (parameters then buffers)
    entry:  name_len u32, name utf-8, ndim u32, dims u32 * ndim,
            payload float32 little-endian

Round trips are bit-exact: float32 payloads are written verbatim.
"""

import struct
from pathlib import Path

import numpy as np

from . import arch
from . import config as cfgmod


MAGIC = b"GZRF"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _named_arrays(model):
    entries = [(name, p.data) for name, p in model.named_parameters()]
    entries += [(name, buf) for name, buf in model.named_buffers()]
    return entries


def save_checkpoint(model, path, model_config, epoch=0, seed=0, final_lr=0.0):
    cfg_text = "\n".join(model_config.to_lines())
    cfg_bytes = cfg_text.encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION),
             struct.pack("<I", len(cfg_bytes)), cfg_bytes,
             struct.pack("<I", int(epoch)), struct.pack("<Q", int(seed)),
             struct.pack("<d", float(final_lr))]
    entries = _named_arrays(model)
    parts.append(struct.pack("<I", len(entries)))
    for name, array in entries:
        nb = name.encode("utf-8")
        arr = np.ascontiguousarray(array, dtype="<f4")
        parts.append(struct.pack("<I", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(b"".join(parts))


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise CheckpointError(
                f"{self.path}: truncated checkpoint reading {what}: expected "
                f"{self.pos + n} bytes, file has {len(self.data)}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def load_checkpoint(path):
    """Rebuild the model and load every entry bit-exactly.

    Returns (model, meta) where meta holds model_config/epoch/seed/final_lr.
    """
    data = Path(path).read_bytes()
    r = _Reader(data, path)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version = r.u32("version")
    if version != VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint format version {version}, "
            f"this build reads version {VERSION}")
    cfg_len = r.u32("config length")
    cfg_text = r.take(cfg_len, "model config").decode("utf-8")
    epoch = r.u32("epoch")
    seed = struct.unpack("<Q", r.take(8, "seed"))[0]
    final_lr = struct.unpack("<d", r.take(8, "final lr"))[0]
    n = r.u32("entry count")
    entries = {}
    for _ in range(n):
        name_len = r.u32("name length")
        name = r.take(name_len, "entry name").decode("utf-8")
        ndim = r.u32("ndim")
        dims = struct.unpack(f"<{ndim}I", r.take(4 * ndim, "dims"))
        count = int(np.prod(dims)) if ndim else 1
        payload = r.take(4 * count, f"payload of {name}")
        entries[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    if r.pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - r.pos} trailing bytes after last entry")

    from .training import model_config_from_section
    section = cfgmod.parse_config("[model]\n" + cfg_text, source=str(path))["model"]
    model_config = model_config_from_section(section)
    model = arch.build_from_model_config(model_config, seed=0)
    expected = dict(_named_arrays(model))
    missing = sorted(set(expected) - set(entries))
    extra = sorted(set(entries) - set(expected))
    if missing or extra:
        raise CheckpointError(
            f"{path}: entry names do not match the rebuilt model "
            f"(missing {missing[:3]}, extra {extra[:3]})")
    for name, arr in entries.items():
        target = expected[name]
        if tuple(target.shape) != tuple(arr.shape):
            raise CheckpointError(
                f"{path}: entry {name} has dims {arr.shape}, model expects {target.shape}")
        target[...] = arr
    meta = {"model_config": model_config, "epoch": epoch, "seed": seed,
            "final_lr": final_lr}
    return model, meta
