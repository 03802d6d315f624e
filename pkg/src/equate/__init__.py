"""Language-AI readiness analytics: ingestion, imputation, statistics,
index computation, snapshot service, and CLI."""

__version__ = "0.1.0"
