# -*- test-case-name: scdnewton.test.test_utils -*-
# Copyright (c) 2024 The scdnewton developers
# See the LICENSE file for more information

from __future__ import annotations

import json
from typing import Any

import numpy as np


def durationHuman(duration: float) -> str:
    """
    Turn number of seconds into a human readable string, 'HH:MM:SS.ss'
    above a minute and 'S.SSs' below
    """
    if duration < 60.0:
        return f"{duration:.2f}s"
    minutes, seconds = divmod(duration, 60.0)
    hours, minutes = divmod(int(minutes), 60)
    return f"{hours:02d}:{minutes:02d}:{seconds:05.2f}"


def json_default(value: Any) -> Any:
    """
    json.dump hook for numpy scalars and arrays
    """
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def write_json(path: str, record: dict[str, Any]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(record, f, indent=2, sort_keys=True, default=json_default)
        f.write("\n")
