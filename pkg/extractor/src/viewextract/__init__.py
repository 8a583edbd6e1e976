"""Embedding extraction for multi-view referent selection.

Reads a dataset manifest (objects + referring expressions) and a directory
of rendered view images, runs a pretrained text/image encoder, and writes
the embeddings in the binary feature-store format consumed by the scoring
package. The two packages share only file formats, never code.
"""

__version__ = "0.1.0"

from .extract import ExtractionJob, ExtractionReport, run_extraction
from .encoders import EncoderError, create_encoder

__all__ = [
    "ExtractionJob",
    "ExtractionReport",
    "run_extraction",
    "EncoderError",
    "create_encoder",
    "__version__",
]
