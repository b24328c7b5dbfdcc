"""specmesh: spectral graph transformer pipeline for two-hand mesh reconstruction."""

__version__ = "0.1.0"
