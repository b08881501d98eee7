"""Hourly forum-sentiment indices, excess turnover and the regressions linking them."""

__version__ = "0.1.0"
