#!/usr/bin/env python3
"""Convenience wrapper: the scripted use-case run with JSON output.

Equivalent to `wearhub demo usecase --format json` with the same flags.
"""

import sys

from wearhub.cli import main

if __name__ == "__main__":
    sys.exit(main(["demo", "usecase", "--format", "json", *sys.argv[1:]]))
