# SPDX-License-Identifier: BSD-3-Clause

from .image import *
