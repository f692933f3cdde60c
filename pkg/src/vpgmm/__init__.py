"""vpgmm package.

Privacy-preserving fitting of Gaussian Mixture Models over vertically partitioned
wind-farm output data, with secure conditional (predictive) distributions and
communication-traffic accounting.
"""

__version__ = "0.1.0"
