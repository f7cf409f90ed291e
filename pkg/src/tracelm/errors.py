"""Exception types shared across the toolkit.

Convention: ConfigError means the caller supplied an invalid configuration
(CLI exit code 1); everything else is a runtime failure (exit code 2).
"""

from __future__ import annotations


class TraceLmError(Exception):
    """Base class for all tracelm errors."""


class ConfigError(TraceLmError):
    """Invalid configuration value or combination."""


class JsonlParseError(TraceLmError):
    """A line of a JSONL event file could not be decoded."""

    def __init__(self, message: str, line_no: int, text: str):
        super().__init__(f"line {line_no}: {message}: {text!r}")
        self.line_no = line_no
        self.text = text


class TraceParseError(TraceLmError):
    """A Babeltrace-style text line violates the trace grammar."""

    def __init__(self, message: str, offset: int, line_no: int | None = None):
        where = f"offset {offset}" if line_no is None else f"line {line_no}, offset {offset}"
        super().__init__(f"{where}: {message}")
        self.offset = offset
        self.line_no = line_no


class VocabMismatchError(TraceLmError):
    """Checkpoint and dataset were built against different vocabularies."""


class UnsupportedModelError(TraceLmError):
    """Operation is not defined for this model kind (e.g. MLM on the LSTM)."""


class TrainingDivergedError(TraceLmError):
    """Loss became non-finite during optimization."""

    def __init__(self, epoch: int, detail: str = ""):
        super().__init__(f"training diverged at epoch {epoch}" + (f": {detail}" if detail else ""))
        self.epoch = epoch
