"""Protocol worker that turns architecture descriptors into trained CNNs."""

__version__ = "0.1.0"
