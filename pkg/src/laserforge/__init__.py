"""Line-laser turntable scanning: calibration, triangulation and merging."""

__version__ = "0.1.0"
