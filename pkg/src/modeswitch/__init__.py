"""Per-request inference-mode routing and serving simulation for single-GPU LLM deployments."""

__version__ = "0.1.0"
