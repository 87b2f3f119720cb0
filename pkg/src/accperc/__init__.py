"""Accessibility percolation on N-ary trees.

Exact path probabilities and moments (:mod:`accperc.exact`), Monte Carlo
simulation of the accessible population (:mod:`accperc.simulate`), stable
generating-function recursions (:mod:`accperc.gfsolve`) and reproducible
experiment pipelines (:mod:`accperc.experiments`).
"""

__version__ = "0.1.0"
