"""
SWformer toolkit: spiking wavelet transformer models, training and analysis.
"""

__version__ = "0.1.0"
