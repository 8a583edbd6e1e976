"""Language-grounded referent selection over multi-view object embeddings."""

__version__ = "0.1.0"
