"""snowlab: a deterministic discrete-event lab for sampling-based DAG consensus."""

__version__ = "0.1.0"
