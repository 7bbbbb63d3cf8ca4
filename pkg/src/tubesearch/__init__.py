"""Spatio-temporal person tube retrieval from natural-language queries.

The pipeline links per-frame person detections into candidate tubes,
encodes tubes and descriptions into fixed-length features, learns a
cross-modal scorer (CCA or a two-branch embedding network), and ranks
candidate tubes for each query.
"""

__version__ = "0.1.0"

from tubesearch.errors import (
    DataFormatError,
    EmptyDescriptionError,
    TubeSearchError,
)

__all__ = [
    "DataFormatError",
    "EmptyDescriptionError",
    "TubeSearchError",
    "__version__",
]
