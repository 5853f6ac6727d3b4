"""Synthetic cross-color person dataset: rendering, manifests and batch sampling."""
