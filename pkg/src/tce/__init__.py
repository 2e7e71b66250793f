"""Target conversation extraction: data pipeline, metrics and a numpy reference network."""

__version__ = "0.1.0"
