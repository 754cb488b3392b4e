# SPDX-License-Identifier: BSD-3-Clause

import sys

from dreflex.cli import main

sys.exit(main())
