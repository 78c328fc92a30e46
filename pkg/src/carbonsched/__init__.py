"""Energy- and carbon-aware scheduling of micro-functions on heterogeneous hardware."""

__version__ = "0.1.0"
