# -*- test-case-name: scdnewton.test.test_output -*-
# Copyright (c) 2024 The scdnewton developers
# See the LICENSE file for more information

from __future__ import annotations

import abc
import time
from os import environ
from typing import Any

import numpy as np

from twisted.logger import formatTime

# Events:
#  scdnewton.experiment.finished
#  scdnewton.experiment.start
#  scdnewton.linalg.gmres
#  scdnewton.mesh.built
#  scdnewton.model.assembled
#  scdnewton.solver.finished
#  scdnewton.solver.iteration
#  scdnewton.solver.start

EVENT_PREFIX = "scdnewton."


def convert(data: Any) -> Any:
    """
    Turn a nested event value into plain JSON-compatible Python objects
    """
    if isinstance(data, str):
        return data
    if isinstance(data, dict):
        return {convert(key): convert(value) for key, value in data.items()}
    if isinstance(data, (list, tuple)):
        return [convert(element) for element in data]
    if isinstance(data, np.ndarray):
        return data.tolist()
    if isinstance(data, np.generic):
        return data.item()
    if isinstance(data, bytes):
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError:
            return repr(data)
    return data


class Output(metaclass=abc.ABCMeta):
    """
    Abstract base class of scdnewton output plugins. Plugins implement
    start, stop and write; emit() is registered with log.addObserver.
    """

    def __init__(self, out_dir: str, label: str = "") -> None:
        self.out_dir = out_dir
        self.label = label
        self.timeFormat: str

        # use Z for UTC (Zulu) time, it's shorter.
        if "TZ" in environ and environ["TZ"] == "UTC":
            self.timeFormat = "%Y-%m-%dT%H:%M:%S.%fZ"
        else:
            self.timeFormat = "%Y-%m-%dT%H:%M:%S.%f%z"

        self.start()

    @abc.abstractmethod
    def start(self) -> None:
        """
        Abstract method to initialize output plugin
        """

    @abc.abstractmethod
    def stop(self) -> None:
        """
        Abstract method to shut down output plugin
        """

    @abc.abstractmethod
    def write(self, event: dict[str, Any]) -> None:
        """
        Handle a scdnewton event within the output plugin
        """

    def emit(self, event: dict) -> None:
        """
        Observer hook called by the Twisted logging for every event.

        Only events with an 'eventid' in the scdnewton namespace and a
        'message' or 'format' are passed on to write().
        """
        # Ignore stdout and stderr in output plugins
        if "printed" in event:
            return

        if not str(event.get("eventid", "")).startswith(EVENT_PREFIX):
            return

        if "message" not in event and "format" not in event:
            return

        ev: dict[str, Any] = convert(event)
        ev.pop("isError", None)

        if "time" not in ev:
            ev["time"] = time.time()
        ev["timestamp"] = formatTime(ev["time"], timeFormat=self.timeFormat)
        if self.label:
            ev["run"] = self.label

        if "format" in ev and (not ev.get("message")):
            try:
                ev["message"] = ev["format"] % ev
                del ev["format"]
            except Exception:
                pass

        self.write(ev)
