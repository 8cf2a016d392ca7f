"""Fused-lasso spatial regression over an adaptive minimum spanning tree."""
