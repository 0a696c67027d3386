# This file makes this directory a Python package.
# Graph generation, estimators, training and evaluation live here.
