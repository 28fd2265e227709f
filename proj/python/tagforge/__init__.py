"""Python bindings for the tagforge C++ library."""

from tagforge._core import (
    TagforgeError,
    __version__,
    chunk,
    content_hash,
    extremum_drop_rate,
    format_hundredths,
    lift_spans,
    normalize,
    percent_hundredths,
    render_chunk_markup,
    render_span_markup,
    run_cli,
    strip_tags,
    tags_balanced,
    verify_fidelity,
)

__all__ = [
    "TagforgeError",
    "__version__",
    "chunk",
    "content_hash",
    "extremum_drop_rate",
    "format_hundredths",
    "lift_spans",
    "normalize",
    "percent_hundredths",
    "render_chunk_markup",
    "render_span_markup",
    "run_cli",
    "strip_tags",
    "tags_balanced",
    "verify_fidelity",
]
