"""Term-sparse SOS relaxations with partition refinement by integer programming."""

__version__ = "0.1.0"
