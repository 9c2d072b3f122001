"""stitchlab: a laboratory for trajectory composition in diffusion planners."""

__version__ = "0.1.0"
