"""LoIU-driven D2D scheduling for collaborative robot teams."""

__version__ = "0.1.0"
