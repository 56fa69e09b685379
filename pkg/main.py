import sys

from farfield_doa.cli import main

if __name__ == "__main__":
    sys.exit(main())
