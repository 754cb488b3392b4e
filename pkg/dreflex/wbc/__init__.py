# SPDX-License-Identifier: BSD-3-Clause

from .tasks import *
from .qp import *
from .controller import *
