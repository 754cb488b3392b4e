# SPDX-License-Identifier: BSD-3-Clause

from .robot import *
from .dynamics import *
