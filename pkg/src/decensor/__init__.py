"""Recover censored person names in posts from the context of names in their comments."""

__version__ = "0.1.0"
