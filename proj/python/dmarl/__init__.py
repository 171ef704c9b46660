"""Distributed zeroth-order multi-agent policy search (C++ core)."""

from ._dmarl import (
    ConfigError,
    GraphError,
    graph_info,
    load_config,
    run,
    schedule,
    suite_names,
    summarize,
    validate,
)

__all__ = [
    "ConfigError",
    "GraphError",
    "graph_info",
    "load_config",
    "run",
    "schedule",
    "suite_names",
    "summarize",
    "validate",
]
