"""HTTP service wrapping the search engine for long-running, multi-client use."""

from .app import app

__all__ = ["app"]
