"""Non-semantic image forgeries that differ only in camera-pipeline traces."""

__version__ = "0.1.0"
