"""
Run the command line interface from a checkout: python comhymba.py <command> ...
"""
import sys

from core.main import main

if __name__ == "__main__":
    sys.exit(main())
