"""
xmaps-depth - Event Camera Structured Light Depth

A Python library and CLI that turns the event stream of a camera watching a
raster-scanning laser projector into per-event depth, by looking projector
disparities up in a precomputed X-map instead of searching time maps.
"""

__version__ = "0.1.0"
__author__ = "Praneeth Turlapati"
