"""Entry point for ``python -m dh2``."""

import sys

from .cli import main

sys.exit(main())
