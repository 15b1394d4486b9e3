"""
Provides scdnewton version information.
"""

# This file is auto-generated! Do not edit!
# Use `python -m incremental.update scdnewton` to change this file.

from __future__ import annotations

from incremental import Version

__version__ = Version("scdnewton", 1, 0, 0)
__all__: list[str] = ["__version__"]
