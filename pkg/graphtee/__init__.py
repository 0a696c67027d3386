# This file makes the 'graphtee' directory a Python package.
# The version string is embedded in every artifact the CLI writes.

__version__ = "1.0.0"
