"""Multi-scenario CTR benchmark: data pipeline, thirteen models, training and scenario-wise evaluation."""

__version__ = "0.1.0"
