"""Figure rendering for dflab artifacts."""

from .figures import KINDS, FigureSpec, MissingColumnError, render

__all__ = ["KINDS", "FigureSpec", "MissingColumnError", "render"]
