"""Glyph-image Arabic text classification.

Shapes Arabic text into contextual glyph clusters, renders them through a
bitmap atlas, encodes each glyph with a small CNN, and classifies
documents with either a character-level CNN or a bidirectional GRU,
optionally re-weighting the loss by inverse effective class frequency.

Submodules are imported lazily so the command-line entry point can
configure the numeric environment before numpy loads.
"""

from importlib import import_module

__version__ = "0.1.0"

_SUBMODULES = (
    "atlas",
    "balance",
    "checkpoint",
    "cli",
    "errors",
    "metrics",
    "models",
    "nn",
    "pipeline",
    "shaping",
    "train",
)

__all__ = list(_SUBMODULES) + ["__version__"]


def __getattr__(name: str):
    if name in _SUBMODULES:
        return import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(__all__)
