"""Topology-constrained floor-plan datasets and adjacency metrics for image-to-image GANs."""

__version__ = "0.1.0"
