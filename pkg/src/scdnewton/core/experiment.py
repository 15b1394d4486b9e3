# -*- test-case-name: scdnewton.test.test_experiment -*-
# Copyright (c) 2024 The scdnewton developers
# See the LICENSE file for more information

"""
Benchmark runs of the frictional contact problem: build the model for a
level, geometry and load case, solve it and write the run directory

    convergence.csv      one row per Newton iteration
    contact_states.csv   stratum and forces of every contact node
    contact_states.vtk   mesh, displacement, stratum and contact state
    solution.npz         reduced solution, accepted as a warm start
    summary.json         iteration totals, timing and the configuration
"""

from __future__ import annotations

import configparser
import csv
import json
import os
import time
from collections.abc import Iterable, Sequence
from importlib import import_module
from typing import Any

import attrs
import numpy as np
from scipy.interpolate import RegularGridInterpolator

from twisted.python import log

from scdnewton import __version__
from scdnewton.core import coulomb
from scdnewton.core.config import ScdConfig
from scdnewton.core.newton import VARIANTS, SolverConfig, SolverFailure, SolverTrace, solve
from scdnewton.core.output import Output
from scdnewton.core.utils import durationHuman, write_json
from scdnewton.fem.assembly import ContactModel, assemble
from scdnewton.fem.mesh import GEOMETRIES, Mesh, MeshSpec, build_mesh
from scdnewton.fem.vtk import write_vtk

# (top traction, right traction) in GPa
LOADS: dict[str, tuple[tuple[float, float, float], tuple[float, float, float]]] = {
    "L1": ((0.0, 0.0, -1.0), (-0.2, 0.0, 0.0)),
    "L2": ((0.0, 0.0, -1.0), (-0.17, -0.1, 0.0)),
}
SWEEP_TOLERANCES = (1e-1, 1e-2, 1e-3, 1e-4)
CONTACT_HEADER = ["node_id", "x1", "x2", "x3", "state", "ux", "uy", "uz", "gx", "gy", "theta"]
STATE_CODES = {"no_contact": 0, "sliding": 1, "sticking": 2}


class ConfigError(Exception):
    """
    An experiment configuration value is missing or invalid
    """


class LevelMismatch(Exception):
    """
    A warm start does not come from the next coarser level of the same
    geometry
    """


def _traction(value: Any) -> tuple[float, float, float] | None:
    if value is None:
        return None
    vector = tuple(float(v) for v in value)
    if len(vector) != 3:
        raise ValueError(f"traction needs three components, got {value!r}")
    return vector  # type: ignore[return-value]


@attrs.frozen
class ExperimentConfig:
    """
    One benchmark case. p_top and p_right default to the tractions of the
    load case.
    """

    lev: int = attrs.field(default=3, validator=attrs.validators.ge(1))
    geometry: str = attrs.field(default="d1", validator=attrs.validators.in_(GEOMETRIES))
    load: str = attrs.field(default="L1", validator=attrs.validators.in_(tuple(LOADS)))
    friction: float = attrs.field(default=0.23, validator=attrs.validators.gt(0))
    E: float = attrs.field(default=70.0, validator=attrs.validators.gt(0))
    nu: float = attrs.field(default=0.334)
    gmres_tol: float = attrs.field(default=0.1, validator=attrs.validators.gt(0))
    newton_rel_tol: float = attrs.field(default=1e-12, validator=attrs.validators.gt(0))
    variant: str = attrs.field(default="dual_a", validator=attrs.validators.in_(VARIANTS))
    warm_start: str | None = None
    out_dir: str = "var/run"
    linear_solver: str = "gmres"
    m3minus_selection: str = attrs.field(
        default="sticking", validator=attrs.validators.in_(coulomb.M3MINUS_SELECTIONS)
    )
    p_top: tuple[float, float, float] | None = attrs.field(default=None, converter=_traction)
    p_right: tuple[float, float, float] | None = attrs.field(default=None, converter=_traction)

    @nu.validator
    def _check_nu(self, attribute: attrs.Attribute, value: float) -> None:
        if not 0.0 < value < 0.5:
            raise ValueError(f"nu must lie in (0, 0.5), got {value}")

    @property
    def tractions(self) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
        top, right = LOADS[self.load]
        return self.p_top or top, self.p_right or right

    @property
    def mesh_spec(self) -> MeshSpec:
        return MeshSpec(self.lev, self.geometry)

    @property
    def label(self) -> str:
        return f"lev{self.lev}-{self.geometry}-{self.load}"

    @classmethod
    def build(cls, **values: Any) -> ExperimentConfig:
        """
        Construct and validate, turning every failure into ConfigError
        """
        fields = {f.name for f in attrs.fields(cls)}
        unknown = sorted(set(values) - fields)
        if unknown:
            raise ConfigError(f"unknown experiment options: {', '.join(unknown)}")
        try:
            return cls(**values)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def from_config(cls, parser: configparser.ConfigParser = ScdConfig, **overrides: Any) -> ExperimentConfig:
        """
        Defaults from [experiment], [contact], [gmres] and [solver], then
        the overrides
        """
        try:
            values: dict[str, Any] = {
                "lev": parser.getint("experiment", "lev", fallback=3),
                "geometry": parser.get("experiment", "geometry", fallback="d1"),
                "load": parser.get("experiment", "load", fallback="L1"),
                "E": parser.getfloat("experiment", "E", fallback=70.0),
                "nu": parser.getfloat("experiment", "nu", fallback=0.334),
                "out_dir": parser.get("experiment", "out_dir", fallback="var/run"),
                "friction": parser.getfloat("contact", "friction", fallback=0.23),
                "m3minus_selection": parser.get("contact", "m3minus_selection", fallback="sticking"),
                "gmres_tol": parser.getfloat("gmres", "tol", fallback=0.1),
                "newton_rel_tol": parser.getfloat("solver", "newton_rel_tol", fallback=1e-12),
                "variant": parser.get("solver", "variant", fallback="dual_a"),
            }
        except ValueError as e:
            raise ConfigError(str(e)) from e
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.build(**values)

    def solver_config(self, parser: configparser.ConfigParser = ScdConfig) -> SolverConfig:
        try:
            return SolverConfig.from_config(
                parser,
                newton_rel_tol=self.newton_rel_tol,
                variant=self.variant,
                gmres_tol=self.gmres_tol,
                linear_solver=self.linear_solver,
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e


def load_json_config(path: str) -> dict[str, Any]:
    """
    Experiment options from a JSON object; keys use the field names,
    dashes are accepted for underscores
    """
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def load_outputs(out_dir: str, label: str, parser: configparser.ConfigParser = ScdConfig) -> list[Output]:
    """
    Instantiate every enabled [output_*] plugin and register its observer
    """
    outputs: list[Output] = []
    for x in parser.sections():
        if not x.startswith("output_"):
            continue
        if parser.getboolean(x, "enabled", fallback=False) is False:
            continue
        engine: str = x.split("_", 1)[1]
        try:
            output = import_module(f"scdnewton.output.{engine}").Output(out_dir, label)
            log.addObserver(output.emit)
            outputs.append(output)
            log.msg(f"Loaded output engine: {engine}")
        except ImportError as e:
            log.err(f"Failed to load output engine: {engine} due to ImportError: {e}")
        except Exception:
            log.err()
            log.msg(f"Failed to load output engine: {engine}")
    return outputs


def unload_outputs(outputs: Iterable[Output]) -> None:
    for output in outputs:
        log.removeObserver(output.emit)
        output.stop()


def interpolate_nodal_field(values: np.ndarray, coarse: MeshSpec, fine: MeshSpec) -> np.ndarray:
    """
    Trilinear interpolation of a nodal field in the mesh parameters
    (x1, x2, layer fraction); returns one row per fine node
    """
    values = np.asarray(values, dtype=float)
    width = values.shape[1] if values.ndim == 2 else 1
    grid = values.reshape(coarse.nx3 + 1, coarse.nx2 + 1, coarse.nx1 + 1, width)
    axes = (
        np.linspace(0.0, 1.0, coarse.nx3 + 1),
        np.linspace(0.0, 1.0, coarse.nx2 + 1),
        np.linspace(0.0, 2.0, coarse.nx1 + 1),
    )
    interpolator = RegularGridInterpolator(axes, grid, method="linear")
    k, j, i = np.meshgrid(
        np.arange(fine.nx3 + 1), np.arange(fine.nx2 + 1), np.arange(fine.nx1 + 1), indexing="ij"
    )
    points = np.stack(
        [k.ravel() / fine.nx3, j.ravel() / fine.nx2, 2.0 * i.ravel() / fine.nx1], axis=1
    )
    out = interpolator(points)
    return out if values.ndim == 2 else out[:, 0]


def interpolate_warm_start(coarse_solution: np.ndarray, coarse_spec: MeshSpec, fine_spec: MeshSpec) -> np.ndarray:
    """
    Start vector for fine_spec from a solution of the next coarser level.

    The displacement u - d is interpolated; the fine gap shift is added back.

    @raise LevelMismatch: if the levels are not consecutive, the geometries
        differ or the vector does not fit the coarse level
    """
    if fine_spec.lev != coarse_spec.lev + 1 or fine_spec.geometry != coarse_spec.geometry:
        raise LevelMismatch(
            f"cannot warm start lev {fine_spec.lev} {fine_spec.geometry} from "
            f"lev {coarse_spec.lev} {coarse_spec.geometry}"
        )
    coarse_solution = np.asarray(coarse_solution, dtype=float)
    if coarse_solution.shape != (coarse_spec.n,):
        raise LevelMismatch(
            f"coarse solution has shape {coarse_solution.shape}, lev {coarse_spec.lev} needs ({coarse_spec.n},)"
        )
    coarse_mesh = build_mesh(coarse_spec)
    fine_mesh = build_mesh(fine_spec)
    field = coarse_mesh.expand(coarse_solution - coarse_mesh.gap_shift())
    fine_field = interpolate_nodal_field(field, coarse_spec, fine_spec)
    return fine_mesh.restrict(fine_field) + fine_mesh.gap_shift()


def save_solution(path: str, u: np.ndarray, spec: MeshSpec) -> None:
    np.savez(path, u=u, lev=spec.lev, geometry=spec.geometry)


def load_solution(path: str) -> tuple[np.ndarray, MeshSpec]:
    try:
        with np.load(path) as data:
            return np.asarray(data["u"], dtype=float), MeshSpec(int(data["lev"]), str(data["geometry"]))
    except (OSError, KeyError, ValueError) as e:
        raise ConfigError(f"cannot read warm start {path}: {e}") from e


def contact_states(model: ContactModel, trace: SolverTrace) -> tuple[list[list[Any]], np.ndarray]:
    """
    Rows of contact_states.csv and the stratum codes at the final graph point
    """
    gp = trace.final_point
    assert gp is not None
    p = model.contact_count
    v = gp.d_hat[: 3 * p].reshape(p, 3)
    y = gp.z[: 3 * p].reshape(p, 3)
    codes = coulomb.classify_cells(v, y, model.friction)
    displacement = model.displacement(gp.d_hat)
    rows = []
    for i, node in enumerate(model.mesh.contact_nodes):
        x1, x2, x3 = model.mesh.coords[node]
        ux, uy, uz = displacement[node]
        rows.append(
            [int(node), repr(float(x1)), repr(float(x2)), repr(float(x3)), coulomb.STRATA[codes[i]].value]
            + [repr(float(c)) for c in (ux, uy, uz, y[i, 0], y[i, 1], y[i, 2])]
        )
    return rows, codes


def write_contact_states(out_dir: str, model: ContactModel, trace: SolverTrace) -> dict[str, int]:
    rows, codes = contact_states(model, trace)
    with open(os.path.join(out_dir, "contact_states.csv"), "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CONTACT_HEADER)
        writer.writerows(rows)

    mesh: Mesh = model.mesh
    stratum = np.full(mesh.node_count, -1, dtype=int)
    state = np.full(mesh.node_count, -1, dtype=int)
    stratum[mesh.contact_nodes] = codes
    state[mesh.contact_nodes] = [STATE_CODES[coulomb.STRATA[c].state] for c in codes]
    assert trace.final_point is not None
    write_vtk(
        os.path.join(out_dir, "contact_states.vtk"),
        mesh,
        displacement=model.displacement(trace.final_point.d_hat),
        point_fields={"stratum": stratum, "state": state},
    )
    return coulomb.census(codes)


def run_experiment(cfg: ExperimentConfig, x0: np.ndarray | None = None) -> dict[str, Any]:
    """
    Build, solve and write one benchmark case into cfg.out_dir.

    The start vector is x0 if given, else the interpolated cfg.warm_start
    solution, else zero.

    @return: the summary record also written to summary.json
    @raise SolverFailure: after writing the summary of the failed run
    """
    os.makedirs(cfg.out_dir, exist_ok=True)
    solver_cfg = cfg.solver_config()
    log.msg(
        eventid="scdnewton.experiment.start",
        format="experiment %(label)s -> %(out_dir)s",
        label=cfg.label,
        out_dir=cfg.out_dir,
        lev=cfg.lev,
        geometry=cfg.geometry,
        load=cfg.load,
    )
    started = time.perf_counter()
    spec = cfg.mesh_spec
    p_top, p_right = cfg.tractions
    model = assemble(build_mesh(spec), cfg.E, cfg.nu, p_top, p_right, cfg.friction)

    if x0 is None and cfg.warm_start:
        coarse, coarse_spec = load_solution(cfg.warm_start)
        x0 = interpolate_warm_start(coarse, coarse_spec, spec)
    start = np.zeros(model.n) if x0 is None else np.asarray(x0, dtype=float)

    summary: dict[str, Any] = {
        "version": __version__,
        "config": attrs.asdict(cfg),
        "p": model.contact_count,
        "n": model.n,
        "warm_started": x0 is not None,
    }
    outputs = load_outputs(cfg.out_dir, cfg.label)
    trace: SolverTrace | None = None
    try:
        u, trace = solve(model.ge_problem(cfg.m3minus_selection), start, solver_cfg)
    except SolverFailure as e:
        trace = e.trace
        summary["error"] = str(e)
        raise
    finally:
        unload_outputs(outputs)
        elapsed = time.perf_counter() - started
        summary["elapsed"] = elapsed
        summary["elapsed_human"] = durationHuman(elapsed)
        if trace is not None:
            summary.update(
                status=trace.status,
                iterations=trace.iterations,
                gmres_total=trace.total_inner_iters,
                gamma=trace.gamma,
                initial_residual=trace.initial_residual,
                final_residual=trace.final_residual,
                residual_factor=trace.residual_factor,
                graph_residual=trace.final_graph_residual,
            )
        write_json(os.path.join(cfg.out_dir, "summary.json"), summary)

    summary["census"] = write_contact_states(cfg.out_dir, model, trace)
    save_solution(os.path.join(cfg.out_dir, "solution.npz"), u, spec)
    write_json(os.path.join(cfg.out_dir, "summary.json"), summary)
    log.msg(
        eventid="scdnewton.experiment.finished",
        format="experiment %(label)s: %(iterations)d iterations, %(gmres_total)d GMRES iterations in %(duration)s",
        label=cfg.label,
        iterations=summary["iterations"],
        gmres_total=summary["gmres_total"],
        duration=summary["elapsed_human"],
    )
    return summary


def tol_sweep(cfg: ExperimentConfig, tols: Sequence[float] = SWEEP_TOLERANCES) -> list[dict[str, Any]]:
    """
    Rerun one case for every GMRES tolerance, each in its own subdirectory
    """
    return [
        run_experiment(attrs.evolve(cfg, gmres_tol=tol, out_dir=os.path.join(cfg.out_dir, f"tol-{tol:g}")))
        for tol in tols
    ]


def level_chain(cfg: ExperimentConfig, levels: Sequence[int]) -> list[dict[str, Any]]:
    """
    Solve consecutive levels, warm starting each from the one before
    """
    levels = list(levels)
    if any(b != a + 1 for a, b in zip(levels, levels[1:])):
        raise LevelMismatch(f"levels {levels} are not consecutive")
    summaries = []
    previous: str | None = cfg.warm_start
    for lev in levels:
        run = attrs.evolve(cfg, lev=lev, warm_start=previous, out_dir=os.path.join(cfg.out_dir, f"lev{lev}"))
        summaries.append(run_experiment(run))
        previous = os.path.join(run.out_dir, "solution.npz")
    return summaries
