# standard library
import sys


# dependencies
from .cli import main


if __name__ == "__main__":
    sys.exit(main())
