import sys

from svbrdf_uq.cli import main

if __name__ == "__main__":
    sys.exit(main())
