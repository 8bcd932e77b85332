"""framesift: few-shot frame sampling and detection-dataset tooling for traffic video."""

__version__ = "0.1.0"
