# -*- coding: utf-8 -*-

"""
ivqr
====

Inference for instrumental variable quantile regression with clustered data:
profiled estimation, the gradient wild bootstrap (Wald and Anderson-Rubin type
tests, with and without cluster robust studentization), baseline tests,
spectral clustering of networks and the Monte Carlo designs used to study them.
"""

__version__ = "0.1"
