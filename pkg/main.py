#!/usr/bin/env python3
"""
vcformer - Main entry point
Variable correlation transformer with a Koopman temporal detector for multivariate forecasting
"""

import sys

from vcformer.cli import main


if __name__ == "__main__":
    sys.exit(main())
