"""Table-structure evaluation and program-assisted table QA toolkit."""

__version__ = "0.1.0"
