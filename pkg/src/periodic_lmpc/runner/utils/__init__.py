"""Run directory I/O: artifact writing, loading and summaries"""

from .artifact_writer import RunArtifactWriter, emit_report, load_report, read_json
from .summary_generator import build_summary, format_summary, write_summary_json

__all__ = [
    "RunArtifactWriter",
    "build_summary",
    "emit_report",
    "format_summary",
    "load_report",
    "read_json",
    "write_summary_json",
]
