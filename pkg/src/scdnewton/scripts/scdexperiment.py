# Copyright (c) 2024 The scdnewton developers
# See the LICENSE file for more information

"""
Run one benchmark case of the frictional contact problem.

Exit codes: 0 success, 2 solver failure, 3 configuration error.
"""

from __future__ import annotations

import os
import sys
from typing import Any, ClassVar

from twisted.logger import globalLogBeginner
from twisted.python import log, usage

from scdnewton import __version__
from scdnewton.core.experiment import (
    ConfigError,
    ExperimentConfig,
    LevelMismatch,
    load_json_config,
    run_experiment,
)
from scdnewton.core.linalg import SingularFactor, Stagnation, ZeroPivot
from scdnewton.core.newton import SolverFailure
from scdnewton.core.scd import GraphViolation
from scdnewton.python.logfile import logger

EXIT_OK = 0
EXIT_SOLVER = 2
EXIT_CONFIG = 3

SOLVER_ERRORS = (
    SolverFailure,
    LevelMismatch,
    GraphViolation,
    SingularFactor,
    Stagnation,
    ZeroPivot,
)

# option name -> ExperimentConfig field
FIELDS = {
    "lev": "lev",
    "geometry": "geometry",
    "load": "load",
    "friction": "friction",
    "E": "E",
    "nu": "nu",
    "gmres-tol": "gmres_tol",
    "newton-tol": "newton_rel_tol",
    "variant": "variant",
    "warm-start": "warm_start",
    "out-dir": "out_dir",
}


class Options(usage.Options):
    """
    This defines commandline options and flags
    """

    synopsis = "Usage: scdexperiment [options]"

    optParameters: ClassVar[list[list[Any]]] = [
        ["lev", None, None, "Discretization level (>= 1).", int],
        ["geometry", None, None, "Lower surface: d1, d2 or d3."],
        ["load", None, None, "Load case: L1 or L2."],
        ["friction", None, None, "Coulomb friction coefficient.", float],
        ["E", None, None, "Young's modulus in GPa.", float],
        ["nu", None, None, "Poisson's ratio.", float],
        ["gmres-tol", None, None, "Relative GMRES tolerance.", float],
        ["newton-tol", None, None, "Relative Newton residual tolerance.", float],
        ["variant", None, None, "Newton variant: dual_a or primal_b."],
        ["warm-start", None, None, "solution.npz of the next coarser level."],
        ["out-dir", None, None, "Directory receiving the run files."],
        ["config", "c", None, "JSON file with experiment options."],
    ]

    def opt_version(self) -> None:
        print(f"scdexperiment {__version__}")  # noqa: T201
        sys.exit(0)


def experiment_config(options: usage.Options) -> ExperimentConfig:
    """
    Config file and environment, then the JSON file, then the flags
    """
    values: dict[str, Any] = {}
    if options["config"]:
        values.update(load_json_config(options["config"]))
    for option, field in FIELDS.items():
        if options[option] is not None:
            values[field] = options[option]
    return ExperimentConfig.from_config(**values)


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
        summary = run_experiment(cfg)
    except ConfigError as e:
        log.err(f"configuration error: {e}")
        return EXIT_CONFIG
    except SOLVER_ERRORS as e:
        log.err(f"{cfg.label} failed: {e}")
        return EXIT_SOLVER

    print(  # noqa: T201
        f"{cfg.label}: it={summary['iterations']} gmres={summary['gmres_total']} "
        f"factor={summary['residual_factor']:.3e} time={summary['elapsed_human']}"
    )
    return EXIT_OK


def run() -> None:
    globalLogBeginner.beginLoggingTo([logger()], redirectStandardIO=False)
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    run()
