"""Binary checkpoint container for parameters plus the JSON run config.

Layout (all integers little-endian)::

    b'VCFM' | version u32 | json_len u32 | json utf-8 | count u32
    count x ( name_len u16 | name utf-8 | rank u32 | extents u64*rank | dtype u8 | raw data )

dtype tags: 0 = float32, 1 = float64. Data is row-major little-endian.
"""

import io
import json
import struct
from dataclasses import dataclass
from typing import BinaryIO, Dict, Mapping, Optional

import numpy as np

from ..errors import CheckpointError
from ..utils.logger import setup_logger

logger = setup_logger('checkpoint')

MAGIC = b'VCFM'
VERSION = 1
DTYPE_TAGS = {0: np.dtype('<f4'), 1: np.dtype('<f8')}
TAG_BY_KIND = {np.dtype(np.float32).str[1:]: 0, np.dtype(np.float64).str[1:]: 1}

# Train statistics stored next to the parameters for denormalizing forecasts
NORM_MEAN = 'norm.mean'
NORM_STD = 'norm.std'


@dataclass
class Checkpoint:
    tensors: Dict[str, np.ndarray]
    config_json: str

    @property
    def config(self) -> Dict:
        return json.loads(self.config_json)

    @property
    def params(self) -> Dict[str, np.ndarray]:
        """Model parameters without the stored normalization statistics."""
        return {k: v for k, v in self.tensors.items() if k not in (NORM_MEAN, NORM_STD)}

    @property
    def norm_stats(self) -> Optional[tuple]:
        if NORM_MEAN in self.tensors and NORM_STD in self.tensors:
            return self.tensors[NORM_MEAN], self.tensors[NORM_STD]
        return None


def _tag(name: str, arr: np.ndarray) -> int:
    tag = TAG_BY_KIND.get(arr.dtype.str[1:])
    if tag is None:
        raise CheckpointError(f"tensor {name} has unsupported dtype {arr.dtype}")
    return tag


def write_checkpoint(stream: BinaryIO, tensors: Mapping[str, np.ndarray], config_json: str) -> None:
    config_bytes = config_json.encode('utf-8')
    stream.write(MAGIC)
    stream.write(struct.pack('<II', VERSION, len(config_bytes)))
    stream.write(config_bytes)
    stream.write(struct.pack('<I', len(tensors)))
    for name, value in tensors.items():
        arr = np.asarray(value)
        tag = _tag(name, arr)
        encoded = name.encode('utf-8')
        if len(encoded) > 0xFFFF:
            raise CheckpointError(f"tensor name too long: {name[:40]}...")
        stream.write(struct.pack('<H', len(encoded)))
        stream.write(encoded)
        stream.write(struct.pack('<I', arr.ndim))
        stream.write(struct.pack(f'<{arr.ndim}Q', *arr.shape))
        stream.write(struct.pack('<B', tag))
        stream.write(np.ascontiguousarray(arr, dtype=DTYPE_TAGS[tag]).tobytes(order='C'))


def _read(stream: BinaryIO, size: int, what: str) -> bytes:
    data = stream.read(size)
    if len(data) != size:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return data


def read_checkpoint(stream: BinaryIO) -> Checkpoint:
    if _read(stream, 4, 'magic') != MAGIC:
        raise CheckpointError("not a vcformer checkpoint (bad magic)")
    version, config_len = struct.unpack('<II', _read(stream, 8, 'header'))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        config_json = _read(stream, config_len, 'config').decode('utf-8')
    except UnicodeDecodeError as e:
        raise CheckpointError(f"config block is not UTF-8: {e}")
    (count,) = struct.unpack('<I', _read(stream, 4, 'tensor count'))
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack('<H', _read(stream, 2, 'name length'))
        name = _read(stream, name_len, 'name').decode('utf-8')
        (rank,) = struct.unpack('<I', _read(stream, 4, f'{name} rank'))
        shape = struct.unpack(f'<{rank}Q', _read(stream, 8 * rank, f'{name} extents'))
        (tag,) = struct.unpack('<B', _read(stream, 1, f'{name} dtype'))
        if tag not in DTYPE_TAGS:
            raise CheckpointError(f"tensor {name} has unknown dtype tag {tag}")
        dtype = DTYPE_TAGS[tag]
        size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        raw = _read(stream, size, f'{name} data')
        tensors[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(dtype.newbyteorder('='))
    if stream.read(1):
        raise CheckpointError("trailing bytes after the last tensor")
    return Checkpoint(tensors, config_json)


def save_checkpoint(path: str, params: Mapping[str, np.ndarray], config_json: str,
                    norm_stats: Optional[tuple] = None) -> int:
    """
    Write parameters (and optionally the train mean/std) to ``path``.

    Args:
        path: Output file
        params: Named parameter arrays (float32 or float64)
        config_json: Run config stored verbatim
        norm_stats: (mean, std) per channel, saved as ``norm.mean`` / ``norm.std``

    Returns:
        Bytes written
    """
    tensors = dict(params)
    if norm_stats is not None:
        tensors[NORM_MEAN], tensors[NORM_STD] = (np.asarray(s, dtype=np.float64) for s in norm_stats)
    buffer = io.BytesIO()
    write_checkpoint(buffer, tensors, config_json)
    payload = buffer.getvalue()
    with open(path, 'wb') as f:
        f.write(payload)
    logger.info(f"saved checkpoint {path}: {len(tensors)} tensors, {len(payload)} bytes")
    return len(payload)


def load_checkpoint(path: str) -> Checkpoint:
    try:
        with open(path, 'rb') as f:
            ckpt = read_checkpoint(f)
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}")
    logger.info(f"loaded checkpoint {path}: {len(ckpt.tensors)} tensors")
    return ckpt
