"""
Formatos binarios little-endian:

- BHRW (pesos): magic "BHRW", uint32 versión, uint32 cantidad de entradas; por entrada
  uint32 longitud del nombre, nombre UTF-8, uint32 rango, uint32 extensiones, float32 crudos.
- BHRT (tensor crudo): magic "BHRT", uint32 rango, uint32 extensiones, float32 crudos.
"""
import logging
import math
import struct
from pathlib import Path
from typing import BinaryIO, Dict, Mapping, Tuple, Union

import numpy as np

from app.core.exceptions import ShapeError, TensorFileError

logger = logging.getLogger(__name__)

WEIGHTS_MAGIC = b"BHRW"
TENSOR_MAGIC = b"BHRT"
WEIGHTS_VERSION = 1

_U32 = struct.Struct("<I")
_F32 = np.dtype("<f4")

PathLike = Union[str, Path]


class _Reader:
    """Lectura secuencial de un buffer con errores de truncado explícitos."""

    def __init__(self, data: bytes, source: str):
        self.data = data
        self.offset = 0
        self.source = source

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise TensorFileError(
                f"Archivo truncado: {self.source}",
                {"offset": self.offset, "needed": size, "size": len(self.data)},
            )
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(_U32.size))[0]

    def array(self) -> np.ndarray:
        rank = self.u32()
        extents = tuple(self.u32() for _ in range(rank))
        count = math.prod(extents)
        raw = self.take(count * _F32.itemsize)
        return np.frombuffer(raw, dtype=_F32).astype(np.float32).reshape(extents)

    def finish(self) -> None:
        if self.offset != len(self.data):
            raise TensorFileError(
                f"Bytes sobrantes al final de {self.source}",
                {"trailing": len(self.data) - self.offset},
            )


def _write_array(stream: BinaryIO, array: np.ndarray) -> None:
    array = np.asarray(array, dtype=np.float32)
    stream.write(_U32.pack(array.ndim))
    for extent in array.shape:
        stream.write(_U32.pack(extent))
    stream.write(np.ascontiguousarray(array, dtype=_F32).tobytes())


def _read_file(path: PathLike) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        logger.error(f"No se pudo leer {path}: {e}")
        raise TensorFileError(f"No se pudo leer {path}", {"error": str(e)}) from e


def _check_magic(reader: _Reader, magic: bytes) -> None:
    found = reader.take(len(magic)) if len(reader.data) >= len(magic) else reader.data
    if found != magic:
        raise TensorFileError(
            f"Magic inválido en {reader.source}",
            {"expected": magic.decode(), "found": found[: len(magic)].hex()},
        )


def write_tensor(path: PathLike, tensor: np.ndarray) -> None:
    with open(path, "wb") as stream:
        stream.write(TENSOR_MAGIC)
        _write_array(stream, tensor)
    logger.debug(f"Tensor {tuple(np.shape(tensor))} escrito en {path}")


def decode_tensor(data: bytes, source: str = "<bytes>") -> np.ndarray:
    """
    Decodifica el contenido de un archivo BHRT.

    Raises:
        TensorFileError: Si el magic es incorrecto, el contenido está truncado o sobran bytes
    """
    reader = _Reader(data, source)
    _check_magic(reader, TENSOR_MAGIC)
    array = reader.array()
    reader.finish()
    return array


def read_tensor(path: PathLike) -> np.ndarray:
    return decode_tensor(_read_file(path), str(path))


def save_weights(path: PathLike, params: Mapping[str, np.ndarray]) -> None:
    """Escribe los parámetros en formato BHRW, en el orden del mapping."""
    with open(path, "wb") as stream:
        stream.write(WEIGHTS_MAGIC)
        stream.write(_U32.pack(WEIGHTS_VERSION))
        stream.write(_U32.pack(len(params)))
        for name, value in params.items():
            encoded = name.encode("utf-8")
            stream.write(_U32.pack(len(encoded)))
            stream.write(encoded)
            _write_array(stream, value)
    logger.info(f"{len(params)} tensores de pesos guardados en {path}")


def load_weights(path: PathLike) -> Dict[str, np.ndarray]:
    """
    Lee un archivo BHRW.

    Returns:
        Diccionario nombre → array float32, en el orden del archivo

    Raises:
        TensorFileError: Formato inválido, versión no soportada o nombres repetidos
    """
    reader = _Reader(_read_file(path), str(path))
    _check_magic(reader, WEIGHTS_MAGIC)
    version = reader.u32()
    if version != WEIGHTS_VERSION:
        raise TensorFileError(f"Versión BHRW no soportada: {version}", {"version": version})
    count = reader.u32()
    params: Dict[str, np.ndarray] = {}
    for _ in range(count):
        size = reader.u32()
        try:
            name = reader.take(size).decode("utf-8")
        except UnicodeDecodeError as e:
            raise TensorFileError(f"Nombre de parámetro no es UTF-8 en {path}") from e
        if name in params:
            raise TensorFileError(f"Parámetro repetido: {name}", {"parameter": name})
        params[name] = reader.array()
    reader.finish()
    logger.info(f"{count} tensores de pesos leídos de {path}")
    return params


def load_network_weights(net, path: PathLike):
    """
    Carga un archivo BHRW y lo valida contra el inventario de parámetros de `net`.

    Returns:
        Nueva Network con los pesos del archivo

    Raises:
        TensorFileError: Si el archivo no coincide con el inventario
    """
    params = load_weights(path)
    try:
        return net.with_params(params)
    except ShapeError as e:
        raise TensorFileError(f"Los pesos de {path} no coinciden con la red {net.spec.name}", e.details) from e


def tensor_summary(array: np.ndarray) -> Tuple[Tuple[int, ...], float, float]:
    """Forma, mínimo y máximo de un tensor, para los logs de la CLI."""
    array = np.asarray(array)
    if array.size == 0:
        return tuple(array.shape), 0.0, 0.0
    return tuple(array.shape), float(array.min()), float(array.max())
