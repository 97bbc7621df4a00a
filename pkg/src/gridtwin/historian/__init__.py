"""Append-only time-series store for supervisory tag samples."""

from gridtwin.historian.store import (
    AGGREGATES,
    HistorianError,
    HistorianStore,
    TagSample,
    decode_value,
    encode_value,
)
from gridtwin.historian.protocol import (
    DEFAULT_PORT,
    HistorianClient,
    HistorianServer,
    sample_from_json,
    sample_to_json,
)

__all__ = [
    "AGGREGATES",
    "DEFAULT_PORT",
    "HistorianClient",
    "HistorianError",
    "HistorianServer",
    "HistorianStore",
    "TagSample",
    "decode_value",
    "encode_value",
    "sample_from_json",
    "sample_to_json",
]
