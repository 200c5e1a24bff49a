"""Two-stage extraction and formalization of security properties from
protocol documents, with the dataset format, metric suite, and review
service around it."""

__version__ = "0.1.0"
