"""Model files.

Layout, little endian::

    b"URNN"  u16 version
    u32 length  config text (utf-8, sorted "key = value" lines)
    u32 count   then per parameter: u16 length, name, u8 ndim, u32 dims..., f64 values...
    u32 crc32 of every preceding byte
"""
import struct
import zlib
from pathlib import Path
from typing import Dict, Union

import numpy as np
from pyparsing import Group, ParseException, Suppress, Word, ZeroOrMore, alphanums, restOfLine

from urnn.exceptions import ModelIntegrityError, ModelVersionError
from urnn.model import ForecastModel, ModelConfig

MAGIC = b"URNN"
FORMAT_VERSION = 1

config_entry = Group(Word(alphanums + "_.") + Suppress("=") + restOfLine)
config_grammar = ZeroOrMore(config_entry)


def config_text(config: ModelConfig) -> str:
    lines = []
    for key, value in sorted(config.to_dict().items()):
        lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
    return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> Dict[str, str]:
    try:
        entries = config_grammar.parse_string(text, parse_all=True)
    except ParseException as e:
        raise ModelIntegrityError(f"Malformed config block at line {e.lineno}: {e.msg}")
    return {key: value.strip() for key, value in entries.as_list()}


def dumps(model: ForecastModel) -> bytes:
    chunks = [MAGIC, struct.pack("<H", FORMAT_VERSION)]
    text = config_text(model.config).encode("utf-8")
    chunks.append(struct.pack("<I", len(text)) + text)
    params = model.parameters()
    chunks.append(struct.pack("<I", len(params)))
    for name, tensor in params.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)) + encoded)
        chunks.append(struct.pack(f"<B{tensor.data.ndim}I", tensor.data.ndim, *tensor.shape))
        chunks.append(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())
    body = b"".join(chunks)
    return body + struct.pack("<I", zlib.crc32(body))


def _read_params(data: bytes, offset: int) -> Dict[str, np.ndarray]:
    (count,), offset = struct.unpack_from("<I", data, offset), offset + 4
    values = {}
    for _ in range(count):
        (length,), offset = struct.unpack_from("<H", data, offset), offset + 2
        name = data[offset:offset + length].decode("utf-8")
        offset += length
        (ndim,), offset = struct.unpack_from("<B", data, offset), offset + 1
        shape = struct.unpack_from(f"<{ndim}I", data, offset)
        offset += 4 * ndim
        size = int(np.prod(shape, dtype=np.int64))
        if offset + 8 * size > len(data):
            raise struct.error(f"parameter {name} runs past the end of the file")
        values[name] = np.frombuffer(data, dtype="<f8", count=size, offset=offset).reshape(shape)
        offset += 8 * size
    if offset != len(data):
        raise ModelIntegrityError(f"{len(data) - offset} unexpected trailing bytes")
    return values


def loads(data: bytes) -> ForecastModel:
    """Inverse of :func:`dumps`. Checks magic, version, checksum, then names and shapes."""
    if len(data) < 6 or data[:4] != MAGIC:
        raise ModelIntegrityError("Not a model file (bad magic)")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"Unsupported model format version {version}, expected {FORMAT_VERSION}")
    if len(data) < 14:
        raise ModelIntegrityError("Truncated model file")
    body, (stored,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != stored:
        raise ModelIntegrityError("Checksum mismatch, the model file is corrupt or truncated")

    try:
        (length,) = struct.unpack_from("<I", body, 6)
        config = ModelConfig.from_dict(parse_config_text(body[10:10 + length].decode("utf-8")))
        values = _read_params(body, 10 + length)
    except (struct.error, UnicodeDecodeError, ValueError) as e:
        if isinstance(e, ModelIntegrityError):
            raise
        raise ModelIntegrityError(f"Malformed model file: {e}")

    model = ForecastModel.create(config)
    expected = model.parameters()
    if list(values) != list(expected):
        raise ModelIntegrityError(f"Parameter names {list(values)} do not match the config {list(expected)}")
    for name, tensor in expected.items():
        if values[name].shape != tensor.shape:
            raise ModelIntegrityError(f"Parameter {name} has shape {values[name].shape}, expected {tensor.shape}")
    model.load_state_dict(values)
    return model


def save(model: ForecastModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    if not path.parent.exists():
        path.parent.mkdir(parents=True)
    path.write_bytes(dumps(model))
    return path


def load(path: Union[str, Path]) -> ForecastModel:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path} not found")
    return loads(path.read_bytes())
