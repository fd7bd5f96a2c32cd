"""Allow `python -m dsmsched` as an alias for the dsm-sched script."""

import sys

from dsmsched.cli import main

if __name__ == "__main__":
    sys.exit(main())
