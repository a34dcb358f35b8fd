"""Allow ``python -m locauth`` as an alias for the ``locauth`` script."""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
