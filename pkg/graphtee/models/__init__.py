# This file makes this directory a Python package.
# It holds the pydantic schemas: run configuration, dataset manifests and reports.
