# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

import ctypes
from pathlib import Path

import numpy as np

from dreflex.errors import WeightsError
from dreflex.scenario.contactmap import GridSpec

from .classifier import Classifier
from .features import Normalization, Variants
from .mlp import MLPWeights

__all__ = ['WEIGHTS_MAGIC', 'WEIGHTS_VERSION', 'save_weights', 'load_weights']

WEIGHTS_MAGIC = b'DRFX'
WEIGHTS_VERSION = 1

_SIDES = ('right', 'left')


class struct_weights_header(ctypes.LittleEndianStructure):
    _pack_ = 1
    _fields_ = [('magic', ctypes.c_char * 4),
                ('version', ctypes.c_uint16),
                ('variant', ctypes.c_uint16),
                ('n_layers', ctypes.c_uint16),
                ('side', ctypes.c_uint8),
                ('reserved', ctypes.c_uint8),
                ('dropout', ctypes.c_double),
                ('x_range', ctypes.c_double * 2),
                ('y_range', ctypes.c_double * 2),
                ('nx', ctypes.c_uint32),
                ('ny', ctypes.c_uint32),
                ('model_digest', ctypes.c_char * 64)]


# File layout, little endian:
#   struct_weights_header
#   uint32 layer sizes [n_layers + 1]
#   float64 normalization offset [n_in], scale [n_in]
#   per layer: float64 W [in, out] row-major, float64 b [out]

def save_weights(path: str | Path, classifier: Classifier):
    theta = classifier.weights
    sizes = theta.sizes
    grid = classifier.grid

    hdr = struct_weights_header()
    hdr.magic = WEIGHTS_MAGIC
    hdr.version = WEIGHTS_VERSION
    hdr.variant = classifier.variant.tag
    hdr.n_layers = len(theta.weights)
    hdr.side = _SIDES.index(classifier.side)
    hdr.dropout = theta.dropout
    hdr.x_range[:] = grid.x_range
    hdr.y_range[:] = grid.y_range
    hdr.nx = grid.nx
    hdr.ny = grid.ny
    hdr.model_digest = classifier.model_digest.encode('ascii')

    with open(path, 'wb') as f:
        f.write(bytes(hdr))
        f.write(np.asarray(sizes, dtype='<u4').tobytes())
        f.write(np.asarray(classifier.normalization.offset, dtype='<f8').tobytes())
        f.write(np.asarray(classifier.normalization.scale, dtype='<f8').tobytes())
        for w, b in zip(theta.weights, theta.biases):
            f.write(np.ascontiguousarray(w, dtype='<f8').tobytes())
            f.write(np.asarray(b, dtype='<f8').tobytes())


def _take(data: bytes, pos: int, count: int, dtype: str) -> tuple[np.ndarray, int]:
    nbytes = count * np.dtype(dtype).itemsize
    if pos + nbytes > len(data):
        raise WeightsError('Weights file is truncated')
    return np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(float), pos + nbytes


def load_weights(path: str | Path) -> Classifier:
    data = Path(path).read_bytes()

    hdr_size = ctypes.sizeof(struct_weights_header)
    if len(data) < hdr_size:
        raise WeightsError('Weights file is truncated')
    hdr = struct_weights_header.from_buffer_copy(data[:hdr_size])

    if hdr.magic != WEIGHTS_MAGIC:
        raise WeightsError(f'Bad weights file magic {hdr.magic!r}')
    if hdr.version != WEIGHTS_VERSION:
        raise WeightsError(f'Unsupported weights file version {hdr.version}')
    if hdr.side >= len(_SIDES):
        raise WeightsError(f'Bad damaged side {hdr.side}')

    try:
        variant = Variants.find_by_tag(hdr.variant)
    except ValueError as e:
        raise WeightsError(str(e)) from None

    pos = hdr_size
    sizes, pos = _take(data, pos, hdr.n_layers + 1, '<u4')
    sizes = [int(s) for s in sizes]
    n_in = sizes[0]
    offset, pos = _take(data, pos, n_in, '<f8')
    scale, pos = _take(data, pos, n_in, '<f8')

    weights = []
    biases = []
    for n_a, n_b in zip(sizes, sizes[1:]):
        w, pos = _take(data, pos, n_a * n_b, '<f8')
        b, pos = _take(data, pos, n_b, '<f8')
        weights.append(w.reshape(n_a, n_b))
        biases.append(b)
    if pos != len(data):
        raise WeightsError('Trailing data in weights file')

    try:
        theta = MLPWeights(weights, biases, hdr.dropout)
        grid = GridSpec(tuple(hdr.x_range), tuple(hdr.y_range), hdr.nx, hdr.ny)
    except ValueError as e:
        raise WeightsError(str(e)) from None
    if not theta.finite:
        raise WeightsError('Weights file holds non-finite values')

    return Classifier(theta, variant, Normalization(offset, scale), grid,
                      hdr.model_digest.decode('ascii'), _SIDES[hdr.side])
