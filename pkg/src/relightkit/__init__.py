"""relightkit: personalized portrait video relighting with a monitor light."""

__version__ = "0.1.0"
