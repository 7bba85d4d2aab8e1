"""Nested mention detection and mention-ranking coreference, trained from
chain-only (partial) annotation, on a small numpy autodiff engine."""

__version__ = "0.1.0"
