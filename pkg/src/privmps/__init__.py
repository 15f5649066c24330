"""Privacy-preserving maximal parent set learning over horizontally partitioned data."""

__version__ = "0.1.0"
