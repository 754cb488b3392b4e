# SPDX-License-Identifier: BSD-3-Clause

from __future__ import annotations

from pathlib import Path

import numpy as np
import numpy.typing as npt

__all__ = ['map_to_bgr888', 'confidence_to_bgr888', 'upscale', 'mark_cell', 'side_by_side',
           'render_contact_map', 'write_ppm', 'HEAT_LEVELS']

HEAT_LEVELS = 16

# BGR
_TRUE = (255, 255, 255)
_FALSE = (0, 0, 0)
_MARK = (0, 0, 255)
_GAP = (64, 64, 64)


def map_to_bgr888(cells: npt.NDArray[np.bool_]) -> npt.NDArray[np.uint8]:
    """Binary contact map, one pixel per cell; the top image row is the highest wall row"""
    cells = np.asarray(cells, dtype=bool)
    img = np.empty(cells.shape + (3,), dtype=np.uint8)
    img[cells] = _TRUE
    img[~cells] = _FALSE
    return np.flipud(img)


def confidence_to_bgr888(confidence: npt.NDArray[np.float64],
                         levels: int = HEAT_LEVELS) -> npt.NDArray[np.uint8]:
    """Confidences in [0, 1] quantized to heat levels, blue (low) to red (high)"""
    c = np.clip(np.nan_to_num(np.asarray(confidence, dtype=float)), 0.0, 1.0)
    q = np.minimum((c * levels).astype(int), levels - 1)
    v = (q * 255 // max(levels - 1, 1)).astype(np.uint8)
    img = np.zeros(c.shape + (3,), dtype=np.uint8)
    img[..., 2] = v
    img[..., 1] = (255 - np.abs(2 * v.astype(int) - 255)) // 2
    img[..., 0] = 255 - v
    return np.flipud(img)


def upscale(img: npt.NDArray[np.uint8], factor: int) -> npt.NDArray[np.uint8]:
    if factor < 1:
        raise ValueError('Scale factor must be a positive integer')
    return np.repeat(np.repeat(img, factor, axis=0), factor, axis=1)


def mark_cell(img: npt.NDArray[np.uint8], row: int, col: int, factor: int,
              color=_MARK) -> npt.NDArray[np.uint8]:
    """
    Outline one cell of an upscaled image. row counts map rows from the
    bottom, as in the contact map arrays.
    """
    out = img.copy()
    n_rows = img.shape[0] // factor
    top = (n_rows - 1 - row) * factor
    left = col * factor
    bottom = top + factor - 1
    right = left + factor - 1
    out[top, left:right + 1] = color
    out[bottom, left:right + 1] = color
    out[top:bottom + 1, left] = color
    out[top:bottom + 1, right] = color
    return out


def side_by_side(left: npt.NDArray[np.uint8], right: npt.NDArray[np.uint8],
                 gap: int = 4) -> npt.NDArray[np.uint8]:
    h = max(left.shape[0], right.shape[0])

    def pad(img):
        out = np.empty((h, img.shape[1], 3), dtype=np.uint8)
        out[:] = _GAP
        out[:img.shape[0]] = img
        return out

    spacer = np.empty((h, gap, 3), dtype=np.uint8)
    spacer[:] = _GAP
    return np.hstack([pad(left), spacer, pad(right)])


def render_contact_map(cells: None | npt.NDArray[np.bool_] = None,
                       confidence: None | npt.NDArray[np.float64] = None,
                       selected: None | tuple[int, int] = None,
                       scale: int = 16) -> npt.NDArray[np.uint8]:
    """
    Predicted confidence and true map side by side, whichever are given.
    selected is the (row, col) of the chosen cell, marked on every panel.
    """
    panels = []
    if confidence is not None:
        panels.append(upscale(confidence_to_bgr888(confidence), scale))
    if cells is not None:
        panels.append(upscale(map_to_bgr888(cells), scale))
    if not panels:
        raise ValueError('Nothing to render')
    if selected is not None:
        panels = [mark_cell(p, selected[0], selected[1], scale) for p in panels]

    img = panels[0]
    for p in panels[1:]:
        img = side_by_side(img, p)
    return img


def write_ppm(path: str | Path, bgr: npt.NDArray[np.uint8]):
    """Binary PPM (P6); components are stored in RGB order"""
    h, w = bgr.shape[:2]
    rgb = np.ascontiguousarray(np.flip(bgr, axis=2))
    with open(path, 'wb') as f:
        f.write(f'P6\n{w} {h}\n255\n'.encode('ascii'))
        f.write(rgb.tobytes())
