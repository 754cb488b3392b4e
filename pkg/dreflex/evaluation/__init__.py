# SPDX-License-Identifier: BSD-3-Clause

from .avoidability import *
from .policies import *
from .sweeps import *
from .stats import *
