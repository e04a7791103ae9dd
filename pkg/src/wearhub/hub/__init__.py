"""The collection hub: device registry, session lifecycle, control API."""

from .state import SessionManager

__all__ = ["SessionManager"]
