"""Allow ``python -m pelsd``."""

import sys

from .cli import main

sys.exit(main())
