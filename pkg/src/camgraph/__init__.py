"""Pose-driven pair selection and camera-graph weighting for SfM and Gaussian splatting."""
import logging

__version__ = "0.1.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())
