"""
genfilter - nonlinear filtering lab for SDE generative models
"""

__version__ = "0.1.0"
