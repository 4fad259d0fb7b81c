"""Command-line driver: mesh, guess, rescale, solve, verify, write artifacts.

Exit status
    0  converged and constraint thresholds met
    1  I/O error
    2  usage error (bad flag, unknown catalog name, invalid parameter)
    3  no convergence within the iteration budget (or diverged)
    4  linear solve failure
    5  line search failure
    6  converged but constraint thresholds not met
    7  gradient check above tolerance (``--check-gradient`` only)
"""

from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from . import solver as solver_mod
from .boundary import perimeter
from .catalog import GUESSES, TENSORS, interpolate_guess, rescale_to_perimeter
from .forms import augmented_energy
from .io import ensure_dir, write_iteration_log, write_summary, write_vtu
from .mesh import MeshError, generate_disc_mesh, read_msh
from .solver import SolverConfig, newton_solve
from .spaces import build_dofmaps
from .state import State
from .verify import PERIMETER_TOL, SPEED_TOL, constraint_report, fd_gradient_check

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3
EXIT_LINEAR = 4
EXIT_LINE_SEARCH = 5
EXIT_CONSTRAINTS = 6
EXIT_GRADIENT = 7

_REASON_CODES = {
    solver_mod.MAX_ITERATIONS: EXIT_NOT_CONVERGED,
    solver_mod.DIVERGED: EXIT_NOT_CONVERGED,
    solver_mod.LINEAR_FAILURE: EXIT_LINEAR,
    solver_mod.LINE_SEARCH_FAILURE: EXIT_LINE_SEARCH,
}

MeshSource = Union[str, Tuple[int, float]]


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemConfig:
    mu: float = 1.0
    alpha: float = 1e4
    epsilon: float = 1e-5
    tensor: str = "identity"
    guess: str = "disc"
    mesh_source: MeshSource = (64, 0.5)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output_dir: str = "output"
    threads: int = 1

    def __post_init__(self):
        for name in ("mu", "alpha", "epsilon"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be positive, got {getattr(self, name)}")
        if self.tensor not in TENSORS:
            raise UsageError(f"unknown tensor {self.tensor!r}; choose from {', '.join(TENSORS)}")
        if self.guess not in GUESSES:
            raise UsageError(f"unknown guess {self.guess!r}; choose from {', '.join(GUESSES)}")
        if self.threads < 1:
            raise UsageError("threads must be >= 1")


def read_config_file(path) -> dict:
    """Flat ``key = value`` file with ``#`` comments; keys use dashes or underscores."""
    parser = configparser.ConfigParser(comment_prefixes=("#",), inline_comment_prefixes=("#",))
    with open(path, encoding="utf-8") as fh:
        parser.read_string("[run]\n" + fh.read())
    return {k.replace("-", "_"): v.strip() for k, v in parser["run"].items()}


_KEYS = ("mu", "alpha", "epsilon", "tensor", "guess", "mesh", "generate", "tol", "max_iters", "threads", "output")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="plateau-dg",
        description="Critical points of bending plus membrane energy for a disc with a length-constrained elastic boundary.",
    )
    p.add_argument("--config", help="flat key = value file; flags override it")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--mesh", help="ASCII MSH v2.2 triangulation of the unit disc")
    src.add_argument("--generate", nargs=2, metavar=("N", "RATIO"), help="generate a disc mesh")
    p.add_argument("--tensor", choices=TENSORS)
    p.add_argument("--guess", choices=GUESSES)
    p.add_argument("--mu", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--tol", type=float, help="absolute residual tolerance")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--output", help="output directory")
    p.add_argument("--check-gradient", action="store_true", help="finite-difference check on a coarse mesh, then exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args: argparse.Namespace) -> ProblemConfig:
    values = read_config_file(args.config) if args.config else {}
    unknown = set(values) - set(_KEYS)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key in _KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if args.mesh is not None:
        values.pop("generate", None)
    elif args.generate is not None:
        values.pop("mesh", None)
    try:
        if "mesh" in values and "generate" in values:
            raise UsageError("give either mesh or generate, not both")
        if "mesh" in values:
            source: MeshSource = str(values["mesh"])
        elif "generate" in values:
            g = values["generate"]
            n, ratio = g.split() if isinstance(g, str) else g
            source = (int(n), float(ratio))
        else:
            source = (64, 0.5)
        base = SolverConfig()
        solver = SolverConfig(
            abs_tol=float(values.get("tol", base.abs_tol)),
            rel_tol=base.rel_tol,
            max_iters=int(values.get("max_iters", base.max_iters)),
        )
        return ProblemConfig(
            mu=float(values.get("mu", 1.0)),
            alpha=float(values.get("alpha", 1e4)),
            epsilon=float(values.get("epsilon", 1e-5)),
            tensor=str(values.get("tensor", "identity")),
            guess=str(values.get("guess", "disc")),
            mesh_source=source,
            solver=solver,
            output_dir=str(values.get("output", "output")),
            threads=int(values.get("threads", 1)),
        )
    except UsageError:
        raise
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def load_mesh(source: MeshSource):
    if isinstance(source, str):
        return read_msh(source)
    n, ratio = source
    return generate_disc_mesh(int(n), float(ratio))


def exit_code(report, shape) -> int:
    if not report.converged:
        return _REASON_CODES.get(report.termination_reason, EXIT_NOT_CONVERGED)
    return EXIT_OK if shape.constraints_ok else EXIT_CONSTRAINTS


def run(config: ProblemConfig) -> int:
    """Full pipeline; returns the exit status and writes artifacts to ``output_dir``."""
    try:
        mesh = load_mesh(config.mesh_source)
    except (OSError, MeshError, ValueError) as exc:
        logger.error("mesh: %s", exc)
        return EXIT_IO if isinstance(exc, OSError) else EXIT_USAGE
    layout = build_dofmaps(mesh)
    initial = rescale_to_perimeter(interpolate_guess(mesh, layout, config.guess), mesh, layout)

    t0 = time.perf_counter()
    state, report = newton_solve(initial, config, mesh, layout, config.solver, threads=config.threads)
    elapsed = time.perf_counter() - t0
    shape = constraint_report(state, config, mesh, layout)
    code = exit_code(report, shape)

    try:
        ensure_dir(config.output_dir)
        out = config.output_dir
        write_vtu(initial, mesh, layout, os.path.join(out, "initial.vtu"))
        write_vtu(state, mesh, layout, os.path.join(out, "solution.vtu"))
        write_iteration_log(report, os.path.join(out, "iterations.csv"))
        write_summary(
            os.path.join(out, "summary.csv"),
            {
                "run": {
                    "tensor": config.tensor,
                    "guess": config.guess,
                    "mu": config.mu,
                    "alpha": config.alpha,
                    "epsilon": config.epsilon,
                    "n_vertices": mesh.n_vertices,
                    "n_cells": mesh.n_cells,
                    "n_boundary_edges": len(mesh.boundary_edges),
                    "membrane_dofs": layout.membrane_total,
                    "multiplier_dofs": layout.multiplier_total,
                },
                "solver": {
                    "converged": report.converged,
                    "iterations": report.iterations,
                    "termination_reason": report.termination_reason,
                    "final_residual": report.residual_norms[-1],
                    "dropped_mode_multiplier": report.mode_residual,
                    "exit_code": code,
                },
                "energy_initial": augmented_energy(initial, config, mesh, layout).as_dict(),
                "energy_final": augmented_energy(state, config, mesh, layout).as_dict(),
                "shape": shape.as_dict(),
                "thresholds_artifact_default": {
                    "perimeter_tol": PERIMETER_TOL,
                    "max_speed_violation_tol": SPEED_TOL,
                    "constraints_ok": shape.constraints_ok,
                },
            },
        )
    except OSError as exc:
        logger.error("writing output: %s", exc)
        return EXIT_IO

    logger.info(
        "%s after %d iterations (%.1f s); perimeter %.6f, circularity %.3e, planarity %.3e",
        report.termination_reason,
        report.iterations,
        elapsed,
        shape.perimeter,
        shape.circularity,
        shape.planarity,
    )
    return code


def check_gradient(config: ProblemConfig, seed: int = 0) -> int:
    mesh = generate_disc_mesh(16, 0.5)
    layout = build_dofmaps(mesh)
    rng = np.random.default_rng(seed)
    base = rescale_to_perimeter(interpolate_guess(mesh, layout, config.guess), mesh, layout)
    state = State(
        base.x + 0.01 * rng.standard_normal(base.x.shape), rng.standard_normal(layout.multiplier_total)
    )
    err = fd_gradient_check(state, config, mesh, layout, h=1e-6, n_coords=200, seed=seed)
    print(f"max relative gradient error: {err!r}")
    return EXIT_OK if err <= 1e-5 else EXIT_GRADIENT


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        config = config_from_args(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"{parser.prog}: error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.check_gradient:
        return check_gradient(config)
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
