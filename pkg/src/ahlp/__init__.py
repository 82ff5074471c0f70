"""Structure-exploiting interior point solver for arrowhead linear programs."""

__version__ = "0.1.0"
