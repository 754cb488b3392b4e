# SPDX-License-Identifier: BSD-3-Clause

from .world import *
from .damage import *
from .pd import *
from .engine import *
from .scenario import *
from .episode import *
