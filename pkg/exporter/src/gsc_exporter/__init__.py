"""Bridge from torch classifiers to the gsc detection engine's container format."""

from .export import (
    ExportError,
    ExportSpec,
    ShapeError,
    SpecError,
    UnsupportedHeadError,
    export,
    extract_head,
    preprocess,
)

__version__ = "0.1.0"
