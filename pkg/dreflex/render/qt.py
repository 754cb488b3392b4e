# SPDX-License-Identifier: BSD-3-Clause

# pylint: skip-file

from __future__ import annotations

from PyQt6 import QtGui, QtWidgets

__all__ = ['bgr888_to_pix', 'show_image']


def bgr888_to_pix(bgr):
    # QImage reads RGB888 byte order
    rgb = bgr[:, :, ::-1].copy()

    w = rgb.shape[1]
    h = rgb.shape[0]
    qim = QtGui.QImage(rgb.data, w, h, 3 * w, QtGui.QImage.Format.Format_RGB888)
    # the pixmap owns its pixels, rgb may go away
    pix = QtGui.QPixmap.fromImage(qim)
    return pix


def show_image(bgr, title: str = 'contact map') -> QtWidgets.QLabel:
    label = QtWidgets.QLabel()
    label.setPixmap(bgr888_to_pix(bgr))
    label.setWindowTitle(title)
    label.show()
    return label
