"""PSOG simulator: synthetic eye rendering, photosensor designs, calibration and experiments."""

__version__ = "0.1.0"
