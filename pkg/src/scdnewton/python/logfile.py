# -*- test-case-name: scdnewton.test.test_output -*-
# Copyright (c) 2024 The scdnewton developers
# See the LICENSE file for more information


from __future__ import annotations

import sys
from os import environ
from pathlib import Path

from twisted.logger import FileLogObserver, textFileLogObserver
from twisted.python import logfile

from scdnewton.core.config import ScdConfig


class ScdDailyLogFile(logfile.DailyLogFile):
    """
    Daily rotated log file with ISO-like date suffixes
    """

    def suffix(self, tupledate: float | tuple[int, int, int]) -> str:
        """
        Return the suffix given a (year, month, day) tuple or unixtime
        """
        if isinstance(tupledate, tuple):
            return f"{tupledate[0]:04d}-{tupledate[1]:02d}-{tupledate[2]:02d}"
        if isinstance(tupledate, float):
            return "_".join(map(str, self.toDate(tupledate)))
        raise TypeError


def time_format() -> str:
    # use Z for UTC (Zulu) time, it's shorter.
    if "TZ" in environ and environ["TZ"] == "UTC":
        return "%Y-%m-%dT%H:%M:%S.%fZ"
    return "%Y-%m-%dT%H:%M:%S.%f%z"


def logger() -> FileLogObserver:
    """
    Text log observer for the configured [logging] logtype: stderr,
    plain (var/log/scdnewton/scdnewton.log) or rotating
    """
    directory = ScdConfig.get("logging", "log_path", fallback=".")
    logtype = ScdConfig.get("logging", "logtype", fallback="stderr")
    if logtype == "stderr":
        return textFileLogObserver(sys.stderr, timeFormat=time_format())

    Path(directory).mkdir(parents=True, exist_ok=True)
    if logtype == "rotating":
        scdlog = ScdDailyLogFile("scdnewton.log", directory)
    elif logtype == "plain":
        scdlog = open(Path(directory, "scdnewton.log"), "a", encoding="utf-8")
    else:
        raise ValueError(f"unknown logtype {logtype!r}")

    return textFileLogObserver(scdlog, timeFormat=time_format())
