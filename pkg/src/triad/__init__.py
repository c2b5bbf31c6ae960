"""Text-guided RGB-3D anomaly detection head with a synthetic tri-modal benchmark."""

__version__ = "0.1.0"
