# SPDX-License-Identifier: BSD-3-Clause

from .features import *
from .mlp import *
from .classifier import *
from .weightsfile import *
from .query import *
from .train import *
