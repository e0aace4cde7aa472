"""
Binary checkpoint files for trained neural DPC models.

Layout (all little endian):
    "NDPC" | u32 version | u64 file length in bytes
    u32 k | u32 |V| | u32 activation id | f64 omega0 | f64 lambda
    u32 n, n x u32 encoder layer dims | u32 n, n x u32 decoder layer dims
    u64 seed | f64 final loss
    f64 leaky slope | u32 len, utf-8 constellation name | |V|*k x f64 constellation points
    u32 n, n x f64 per-epoch losses | u32 len, utf-8 JSON training config
    f64 parameters: encoder then decoder, per layer W (row-major) then b
    u32 CRC-32 of every preceding byte
"""

import json
import logging
import struct
import zlib
from pathlib import Path
from typing import List, Union

import numpy as np

from constellation import Constellation
from errors import CheckpointError
from neural import ACTIVATION_IDS, Activation, Checkpoint, MlpParams, NeuralDpcModel

logger = logging.getLogger(__name__)

MAGIC = b'NDPC'
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct('<4sIQ')
_CRC = struct.Struct('<I')

_ACTIVATION_KINDS = {code: kind for kind, code in ACTIVATION_IDS.items()}


class _Truncated(Exception):
    pass


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, size: int) -> bytes:
        if size < 0 or self.pos + size > len(self.data):
            raise _Truncated()
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: str):
        values = struct.unpack(fmt, self.take(struct.calcsize(fmt)))
        return values[0] if len(values) == 1 else values

    def u32_list(self) -> List[int]:
        n = self.unpack('<I')
        return list(struct.unpack(f'<{n}I', self.take(4 * n)))

    def f64_array(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype='<f8').astype(np.float64)

    def text(self) -> str:
        return self.take(self.unpack('<I')).decode('utf-8')


def _pack_u32_list(values) -> bytes:
    return struct.pack(f'<I{len(values)}I', len(values), *values)


def _pack_text(text: str) -> bytes:
    raw = text.encode('utf-8')
    return struct.pack('<I', len(raw)) + raw


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    model = ckpt.model
    activation = model.encoder.activation
    parts = [
        struct.pack('<III', model.k, model.cardinality, ACTIVATION_IDS[activation.kind]),
        struct.pack('<dd', ckpt.omega0, model.lam),
        _pack_u32_list(model.encoder.dims),
        _pack_u32_list(model.decoder.dims),
        struct.pack('<Qd', ckpt.seed, ckpt.final_loss),
        struct.pack('<d', activation.slope),
        _pack_text(model.constellation.name),
        model.constellation.points.astype('<f8').tobytes(),
        struct.pack(f'<I{len(ckpt.loss_history)}d', len(ckpt.loss_history), *ckpt.loss_history),
        _pack_text(json.dumps(ckpt.train_config, sort_keys=True)),
    ]
    for net in (model.encoder, model.decoder):
        parts.extend(np.ascontiguousarray(a, dtype='<f8').tobytes() for a in net.arrays())
    body = b''.join(parts)
    payload = _PREAMBLE.pack(MAGIC, FORMAT_VERSION, _PREAMBLE.size + len(body) + _CRC.size) + body
    return payload + _CRC.pack(zlib.crc32(payload))


def _read_network(reader: _Reader, dims: List[int], activation: Activation) -> MlpParams:
    arrays = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        arrays.append(reader.f64_array(fan_in * fan_out).reshape(fan_in, fan_out))
        arrays.append(reader.f64_array(fan_out))
    return MlpParams(arrays[0::2], arrays[1::2], activation)


def _parse(payload: bytes) -> Checkpoint:
    reader = _Reader(payload)
    reader.take(_PREAMBLE.size)
    k, m, activation_id = reader.unpack('<III')
    omega0, lam = reader.unpack('<dd')
    enc_dims = reader.u32_list()
    dec_dims = reader.u32_list()
    seed, final_loss = reader.unpack('<Qd')
    slope = reader.unpack('<d')
    name = reader.text()
    points = reader.f64_array(m * k).reshape(m, k)
    history = reader.f64_array(reader.unpack('<I'))
    train_config = json.loads(reader.text())
    if activation_id not in _ACTIVATION_KINDS:
        raise CheckpointError(f"unknown activation id {activation_id}")
    activation = Activation(_ACTIVATION_KINDS[activation_id], slope)
    encoder = _read_network(reader, enc_dims, activation)
    decoder = _read_network(reader, dec_dims, activation)
    if reader.pos != len(payload):
        raise CheckpointError(f"{len(payload) - reader.pos} unparsed bytes before the checksum")
    model = NeuralDpcModel(encoder, decoder, Constellation(name, points), lam)
    return Checkpoint(model=model, train_config=train_config, final_loss=final_loss, seed=seed,
                      loss_history=history.tolist(), omega0=omega0, version=FORMAT_VERSION)


def decode_checkpoint(data: bytes) -> Checkpoint:
    """
    Parse checkpoint bytes.

    The declared file length and the CRC are both checked before any field
    after the preamble is read.

    Raises:
        CheckpointError: "bad magic", "unsupported version", "truncated",
            "trailing bytes" or "checksum mismatch"
    """
    if len(data) >= 4 and data[:4] != MAGIC:
        raise CheckpointError(f"bad magic {data[:4]!r}")
    if len(data) >= 8:
        version = struct.unpack('<I', data[4:8])[0]
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported version {version} (expected {FORMAT_VERSION})")
    if len(data) < _PREAMBLE.size + _CRC.size:
        raise CheckpointError("truncated checkpoint (no header)")
    declared = _PREAMBLE.unpack_from(data)[2]
    if len(data) < declared:
        raise CheckpointError(f"truncated checkpoint ({len(data)} of {declared} bytes)")
    if len(data) > declared:
        raise CheckpointError(f"{len(data) - declared} trailing bytes after checkpoint")
    payload = data[:-_CRC.size]
    if zlib.crc32(payload) != _CRC.unpack(data[-_CRC.size:])[0]:
        raise CheckpointError("checksum mismatch")
    try:
        return _parse(payload)
    except _Truncated:
        raise CheckpointError("inconsistent field lengths in checkpoint") from None
    except (ValueError, UnicodeDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint header: {e}") from e


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = encode_checkpoint(ckpt)
    try:
        path.write_bytes(data)
    except OSError as e:
        raise CheckpointError(f"cannot write checkpoint {path}: {e}") from e
    logger.info(f"Saved checkpoint to {path} ({len(data)} bytes)")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    ckpt = decode_checkpoint(data)
    logger.info(f"Loaded checkpoint {path}: {ckpt.model.constellation.name}, lambda={ckpt.model.lam:g}")
    return ckpt
