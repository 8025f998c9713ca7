"""Private ad delivery over single-server PIR."""

__version__ = "0.1.0"
