"""Spike tensors, neurons, wavelet transforms and the tensor container format."""
