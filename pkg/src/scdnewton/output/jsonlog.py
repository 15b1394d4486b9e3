# Copyright (c) 2024 The scdnewton developers
# See the LICENSE file for more information

from __future__ import annotations

import json
import os

from twisted.python import log

import scdnewton.core.output
import scdnewton.python.logfile
from scdnewton.core.config import ScdConfig


class Output(scdnewton.core.output.Output):
    """
    jsonlog output
    """

    def start(self) -> None:
        self.epoch_timestamp = ScdConfig.getboolean(
            "output_jsonlog", "epoch_timestamp", fallback=False
        )
        fn = ScdConfig.get("output_jsonlog", "logfile", fallback="events.json")
        path = os.path.join(self.out_dir, fn)
        dirs = os.path.dirname(path)
        os.makedirs(dirs, exist_ok=True)
        self.outfile = scdnewton.python.logfile.ScdDailyLogFile(
            os.path.basename(path), dirs, defaultMode=0o664
        )

    def stop(self) -> None:
        if self.outfile:
            self.outfile.flush()
            self.outfile.close()

    def write(self, event):
        if self.epoch_timestamp:
            event["epoch"] = int(event["time"] * 1000000 / 1000)
        for i in list(event.keys()):
            # Remove twisted 15 legacy keys
            if i.startswith("log_") or i == "time" or i == "system":
                del event[i]
        try:
            json.dump(event, self.outfile, separators=(",", ":"))
            self.outfile.write("\n")
            self.outfile.flush()
        except TypeError:
            log.err("jsonlog: Can't serialize: '" + repr(event) + "'")
