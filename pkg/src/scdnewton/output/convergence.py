# Copyright (c) 2024 The scdnewton developers
# See the LICENSE file for more information

"""
Convergence table: one CSV row per scdnewton.solver.iteration event.

Rows carry no timestamps, so reruns with the same configuration produce
byte-identical files.
"""

from __future__ import annotations

import csv
import os
from typing import Any

import scdnewton.core.output
from scdnewton.core.config import ScdConfig
from scdnewton.core.coulomb import STRATA

HEADER = ["iter", "residual", "alpha", "gmres_iters"] + [f"n{s.value}" for s in STRATA]


def convergence_row(event: dict[str, Any]) -> list[str]:
    census = event.get("census") or {}
    return [
        str(event["iteration"]),
        repr(float(event["residual"])),
        repr(float(event["alpha"])),
        str(event["gmres_iters"]),
    ] + [str(census.get(s.value, 0)) for s in STRATA]


class Output(scdnewton.core.output.Output):
    """
    convergence CSV output
    """

    def start(self) -> None:
        fn = ScdConfig.get("output_convergence", "filename", fallback="convergence.csv")
        os.makedirs(self.out_dir, exist_ok=True)
        self.path = os.path.join(self.out_dir, fn)
        self.outfile = open(self.path, "w", encoding="utf-8", newline="")
        self.writer = csv.writer(self.outfile, lineterminator="\n")
        self.writer.writerow(HEADER)

    def stop(self) -> None:
        if self.outfile and not self.outfile.closed:
            self.outfile.close()

    def write(self, event: dict[str, Any]) -> None:
        if event["eventid"] != "scdnewton.solver.iteration":
            return
        self.writer.writerow(convergence_row(event))
        self.outfile.flush()
