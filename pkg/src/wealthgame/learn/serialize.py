"""Flat binary serialization of network parameters.

Layout (little-endian):

    8 bytes   magic b"WGNETv1\\0"
    uint32    kind (1 = feedforward, 2 = recurrent, 0 = generic list)
    uint32    number of arrays
    per array: uint32 ndim, then uint32 dims[ndim]
    payload   row-major float64, arrays concatenated in order
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import WealthGameError
from .nets import MlpParams, RnnParams

MAGIC = b"WGNETv1\x00"
KIND_GENERIC, KIND_MLP, KIND_RNN = 0, 1, 2


def save_arrays(path, arrays: list, kind: int = KIND_GENERIC) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", kind, len(arrays)))
        for a in arrays:
            a = np.asarray(a, dtype=np.float64)
            fh.write(struct.pack("<I", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype=np.float64).tobytes())


def load_arrays(path):
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise WealthGameError(f"{path}: bad magic, not a parameter file")
        kind, count = struct.unpack("<II", fh.read(8))
        shapes = []
        for _ in range(count):
            (ndim,) = struct.unpack("<I", fh.read(4))
            shapes.append(struct.unpack(f"<{ndim}I", fh.read(4 * ndim)))
        arrays = []
        for shp in shapes:
            n = int(np.prod(shp)) if shp else 1
            buf = fh.read(8 * n)
            if len(buf) != 8 * n:
                raise WealthGameError(f"{path}: truncated payload")
            arrays.append(np.frombuffer(buf, dtype="<f8").reshape(shp).copy())
    return kind, arrays


def save_mlp(path, params: MlpParams) -> None:
    save_arrays(path, params.flat(), KIND_MLP)


def load_mlp(path) -> MlpParams:
    kind, arrays = load_arrays(path)
    if kind != KIND_MLP:
        raise WealthGameError(f"{path}: expected a feedforward parameter file")
    weights = arrays[0::2]
    biases = arrays[1::2]
    return MlpParams(weights=weights, biases=biases)


def save_rnn(path, params: RnnParams) -> None:
    save_arrays(path, params.flat(), KIND_RNN)


def load_rnn(path) -> RnnParams:
    kind, arrays = load_arrays(path)
    if kind != KIND_RNN:
        raise WealthGameError(f"{path}: expected a recurrent parameter file")
    return RnnParams(*arrays)
