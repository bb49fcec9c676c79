"""Allow ``python -m tubescore`` as an alias for the console script."""
import sys

from tubescore.cli import main

if __name__ == "__main__":
    sys.exit(main())
