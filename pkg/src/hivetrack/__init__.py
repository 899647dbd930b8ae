"""Desk-scale toolkit for detecting, orienting, and tracking densely
packed oriented objects in grayscale video."""

__version__ = "0.1.0"
