"""Joint embedding of context features, mentions, entities and types for entity linking."""

__version__ = "0.1.0"
