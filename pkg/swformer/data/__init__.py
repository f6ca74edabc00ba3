"""Dataset loaders, event binning and synthetic generators."""
