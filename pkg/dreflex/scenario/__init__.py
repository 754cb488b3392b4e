# SPDX-License-Identifier: BSD-3-Clause

from dreflex.sim.scenario import Scenario

from .contactmap import *
from .sampling import *
from .dataset import *
from .runners import *
