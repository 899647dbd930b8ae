"""Binary checkpoint format for networks and their optimizer state.

Little-endian layout:

    magic  4 bytes  "CMTK"
    u32    format version (currently 1)
    u32    base filters
    u32    depth
    u32    input channels
    u32    output channels
    u32    recurrent flag (0/1)
    u64    Adam step counter
    u32    tensor count
    per tensor:
        u32      name length, then UTF-8 name
        u32      rank, then u32 dims
        float32  raw values, C order

Parameters are stored under their registry names; Adam first/second
moments under the same names suffixed ``.m`` / ``.v``. Values are
float32, so a float32 network round-trips bit-exactly.
"""

import struct

import numpy as np

from ..errors import DataError
from .model import NetConfig, Network

MAGIC = b"CMTK"
VERSION = 1


def _write_tensor(fh, name, arr):
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<I", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<I", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_exact(fh, n):
    data = fh.read(n)
    if len(data) != n:
        raise DataError("truncated checkpoint file")
    return data


def _read_tensor(fh):
    (name_len,) = struct.unpack("<I", _read_exact(fh, 4))
    name = _read_exact(fh, name_len).decode("utf-8")
    (rank,) = struct.unpack("<I", _read_exact(fh, 4))
    dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank))
    count = int(np.prod(dims)) if rank else 1
    data = np.frombuffer(_read_exact(fh, 4 * count), dtype="<f4")
    return name, data.reshape(dims)


def save_checkpoint(net, path):
    """Write parameters and Adam state; see module docstring for layout."""
    params = net.param_items()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        cfg = net.config
        fh.write(
            struct.pack(
                "<6I",
                VERSION,
                cfg.base_filters,
                cfg.depth,
                cfg.in_channels,
                cfg.out_channels,
                1 if cfg.recurrent else 0,
            )
        )
        fh.write(struct.pack("<Q", net.adam_step))
        fh.write(struct.pack("<I", 3 * len(params)))
        for name, arr in params:
            _write_tensor(fh, name, arr)
            _write_tensor(fh, f"{name}.m", net.adam_m[name])
            _write_tensor(fh, f"{name}.v", net.adam_v[name])


def load_checkpoint(path, config=None):
    """Rebuild a network from a checkpoint.

    When ``config`` is given it must match the stored config exactly;
    shape or name disagreements raise DataError.
    """
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != MAGIC:
            raise DataError("not a checkpoint file (bad magic)")
        version, base, depth, c_in, c_out, recurrent = struct.unpack(
            "<6I", _read_exact(fh, 24)
        )
        if version != VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        stored = NetConfig(
            base_filters=base,
            depth=depth,
            in_channels=c_in,
            out_channels=c_out,
            recurrent=bool(recurrent),
        )
        if config is not None and config != stored:
            raise DataError(
                f"checkpoint config {stored} does not match requested {config}"
            )
        (step,) = struct.unpack("<Q", _read_exact(fh, 8))
        (tensor_count,) = struct.unpack("<I", _read_exact(fh, 4))
        tensors = {}
        for _ in range(tensor_count):
            name, arr = _read_tensor(fh)
            tensors[name] = arr
        if fh.read(1):
            raise DataError("trailing bytes after checkpoint payload")
    net = Network(stored, seed=0, dtype=np.float32)
    net.adam_step = step
    expected = [name for name, _ in net.param_items()]
    wanted = set()
    for name in expected:
        wanted.update((name, f"{name}.m", f"{name}.v"))
    if set(tensors) != wanted:
        missing = sorted(wanted - set(tensors))
        extra = sorted(set(tensors) - wanted)
        raise DataError(
            f"checkpoint tensor names mismatch (missing {missing}, extra {extra})"
        )
    for name, param in net.param_items():
        for key, dest in (
            (name, param),
            (f"{name}.m", net.adam_m[name]),
            (f"{name}.v", net.adam_v[name]),
        ):
            src = tensors[key]
            if src.shape != dest.shape:
                raise DataError(
                    f"tensor {key} has shape {src.shape}, expected {dest.shape}"
                )
            dest[...] = src
    return net
