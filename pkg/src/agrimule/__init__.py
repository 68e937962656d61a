"""agrimule: a deterministic digital twin of a drone data-mule irrigation system."""

__version__ = "0.1.0"
