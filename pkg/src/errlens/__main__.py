"""Allow ``python -m errlens`` as an alias for the ``errlens`` script."""

import sys

from errlens.cli import main

if __name__ == "__main__":
    sys.exit(main())
