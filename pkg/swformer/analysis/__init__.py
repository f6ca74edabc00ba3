"""Spectrum analysis, energy accounting and the Haar fidelity bench."""
