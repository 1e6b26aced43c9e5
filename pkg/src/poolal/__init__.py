"""Pool-based active learning: acquisition strategies, open-set and long-tailed
scenarios, a cycle-based experiment engine and significance analysis."""

__version__ = "0.1.0"

from .data import OOD_LABEL, DatasetTable, PoolState, RngStream  # noqa: E402

__all__ = ["OOD_LABEL", "DatasetTable", "PoolState", "RngStream", "__version__"]
