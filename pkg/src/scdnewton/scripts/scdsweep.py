# Copyright (c) 2024 The scdnewton developers
# See the LICENSE file for more information

"""
GMRES tolerance sweeps and warm-started level chains; one summary row per
run is written to <out-dir>/sweep.csv.
"""

from __future__ import annotations

import csv
import os
import sys
from typing import Any, ClassVar

from twisted.logger import globalLogBeginner
from twisted.python import log, usage

from scdnewton.core.experiment import (
    SWEEP_TOLERANCES,
    ConfigError,
    level_chain,
    tol_sweep,
)
from scdnewton.python.logfile import logger
from scdnewton.scripts.scdexperiment import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_SOLVER,
    SOLVER_ERRORS,
    experiment_config,
)
from scdnewton.scripts.scdexperiment import Options as ExperimentOptions

SWEEP_HEADER = [
    "lev",
    "geometry",
    "load",
    "gmres_tol",
    "warm_started",
    "status",
    "iterations",
    "gmres_total",
    "residual_factor",
    "elapsed",
]


def _floats(value: str) -> list[float]:
    return [float(v) for v in value.split(",") if v.strip()]


def _ints(value: str) -> list[int]:
    return [int(v) for v in value.split(",") if v.strip()]


class Options(ExperimentOptions):
    synopsis = "Usage: scdsweep [options] (--tols T1,T2,... | --levels L1,L2,...)"

    optParameters: ClassVar[list[list[Any]]] = [
        ["tols", None, None, "Comma separated GMRES tolerances.", _floats],
        ["levels", None, None, "Comma separated consecutive levels.", _ints],
    ]

    def postOptions(self) -> None:
        if self["tols"] is None and self["levels"] is None:
            self["tols"] = list(SWEEP_TOLERANCES)
        if self["tols"] is not None and self["levels"] is not None:
            raise usage.UsageError("--tols and --levels are exclusive")


def sweep_row(summary: dict[str, Any]) -> list[Any]:
    config = summary["config"]
    return [
        config["lev"],
        config["geometry"],
        config["load"],
        config["gmres_tol"],
        summary["warm_started"],
        summary.get("status", ""),
        summary.get("iterations", ""),
        summary.get("gmres_total", ""),
        summary.get("residual_factor", ""),
        f"{summary['elapsed']:.3f}",
    ]


def main(argv: list[str]) -> int:
    options = Options()
    try:
        options.parseOptions(argv)
        cfg = experiment_config(options)
    except usage.UsageError as e:
        print(f"{os.path.basename(sys.argv[0])}: {e}", file=sys.stderr)  # noqa: T201
        print(options, file=sys.stderr)  # noqa: T201
        return EXIT_CONFIG
    except ConfigError as e:
        log.err(f"configuration error: {e}")
        return EXIT_CONFIG

    try:
        if options["levels"] is not None:
            summaries = level_chain(cfg, options["levels"])
        else:
            summaries = tol_sweep(cfg, options["tols"])
    except ConfigError as e:
        log.err(f"configuration error: {e}")
        return EXIT_CONFIG
    except SOLVER_ERRORS as e:
        log.err(f"sweep failed: {e}")
        return EXIT_SOLVER

    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "sweep.csv"), "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SWEEP_HEADER)
        writer.writerows(sweep_row(s) for s in summaries)
    return EXIT_OK


def run() -> None:
    globalLogBeginner.beginLoggingTo([logger()], redirectStandardIO=False)
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    run()
