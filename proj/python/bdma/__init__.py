"""Supervised cross-lingual embedding alignment with one bidirectional mapper."""

from bdma._core import *  # noqa: F401,F403
from bdma._core import __version__  # noqa: F401
