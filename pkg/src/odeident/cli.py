"""Config-driven command-line pipelines.

Verbs: ``simulate | certify | analyze-linear | invert | zeta-scan``. Every
experiment is fully described by one JSON config file (schema below); no
model data is defaulted. Reports are machine-first (JSON/CSV) with a short
human summary on stdout, and every JSON output embeds the config digest and
toolkit version.

Config schema::

    {
      "system": {
        "species": "matrix_linear" | "polynomial_basis",
        "k": <state dim>, "n": <param dim>,
        "alpha0": <k x k nested list | flat length-n list>,
        "x0": <length-k list>,
        "basis": [<map>, ...]            # polynomial_basis only; each map is
                                         # a list of k components, each a list
                                         # of {"coeff": c, "exponents": [...]}
      },
      "observation": {"h": .., "m": .., "tol": ..},
      "noise": {"sigma": .., "seed": ..},              # optional
      "solver": {                                      # optional
        "r_work": .., "gamma_samples": .., "safety": .., "seed": ..,
        "verify_pairs": .., "k_max": .., "init": [..],
        "gauss_newton": {"max_iter": .., "step_tol": .., "grad_tol": ..,
                          "damping": ..},
        "scan": {"t_values": [..], "alpha_box": [[lo,hi],..],
                 "x_box": [[lo,hi],..], "grid": [..], "rank_tol": ..}
      }
    }

Exit codes: 0 success, 2 input error, 3 numerical/integration failure,
4 not identifiable, 5 non-convergence or rank deficiency.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import DEFAULTS
from .errors import (
    ConvergenceError,
    DefectiveMatrixError,
    DimensionError,
    DomainError,
    InputFormatError,
    IntegrationError,
    NotIdentifiableError,
    RangeError,
)
from .estimate import (
    GaussNewtonOptions,
    ObservationGrid,
    add_noise,
    fd_linear_estimate,
    gauss_newton_invert,
)
from .linearcase import (
    degeneracy_report,
    exp_divided_difference_determinant,
    full_rank_check,
    log_branches,
)
from .numkernel import as_square
from .obsmap import ObservationMapHandle, certify_radius, verify_lower_bound, zeta_scan
from .ode import MatrixLinear, PolyMap, PolynomialBasis, integrate, write_trajectory_csv

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_NOT_IDENTIFIABLE = 4
EXIT_NOT_CONVERGED = 5


class ConfigError(ValueError):
    """Config file failed to parse or validate."""


# ---------------------------------------------------------------------------
# config loading


def _require(mapping: dict, key: str, path: str):
    if key not in mapping:
        raise ConfigError(f"missing required key '{path}.{key}'")
    return mapping[key]


def _as_float(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{path}' must be a number")
    return float(value)


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"'{path}' must be an integer")
    return value


@dataclass
class ExperimentConfig:
    raw: dict
    digest: str
    species: str
    k: int
    n: int
    alpha0: np.ndarray          # flat parameter vector, length n
    x0: np.ndarray
    h: float
    m: int
    tol: float
    sigma: float
    seed: int
    solver: dict

    def build_system(self):
        if self.species == "matrix_linear":
            return MatrixLinear(self.k)
        maps = []
        for mi, comp_list in enumerate(self.raw["system"]["basis"]):
            comps = []
            for component in comp_list:
                comps.append([(term["coeff"], tuple(term["exponents"]))
                              for term in component])
            try:
                maps.append(PolyMap(self.k, comps))
            except (DomainError, DimensionError) as exc:
                raise ConfigError(f"system.basis[{mi}]: {exc}") from exc
        try:
            return PolynomialBasis(maps)
        except (DomainError, DimensionError) as exc:
            raise ConfigError(f"system.basis: {exc}") from exc

    def build_handle(self) -> ObservationMapHandle:
        try:
            return ObservationMapHandle(sys=self.build_system(), x0=self.x0,
                                        h=self.h, m=self.m, tol=self.tol)
        except (DomainError, DimensionError) as exc:
            raise ConfigError(str(exc)) from exc

    def gauss_newton_options(self) -> GaussNewtonOptions:
        gn = self.solver.get("gauss_newton", {})
        try:
            return GaussNewtonOptions(
                max_iter=gn.get("max_iter", DEFAULTS.gn_max_iter),
                step_tol=gn.get("step_tol", DEFAULTS.gn_step_tol),
                grad_tol=gn.get("grad_tol", DEFAULTS.gn_grad_tol),
                damping=gn.get("damping", DEFAULTS.gn_damping),
            )
        except DomainError as exc:
            raise ConfigError(f"solver.gauss_newton: {exc}") from exc


def load_config(path, seed_override: int | None = None) -> ExperimentConfig:
    raw_bytes = Path(path).read_bytes()
    try:
        raw = json.loads(raw_bytes)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse error at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    digest = hashlib.sha256(raw_bytes).hexdigest()

    system = _require(raw, "system", "")
    species = _require(system, "species", "system")
    if species not in ("matrix_linear", "polynomial_basis"):
        raise ConfigError(f"unknown species '{species}'")
    k = _as_int(_require(system, "k", "system"), "system.k")
    n = _as_int(_require(system, "n", "system"), "system.n")
    if k < 1 or n < 1:
        raise ConfigError("system.k and system.n must be >= 1")
    if species == "matrix_linear" and n != k * k:
        raise ConfigError(f"matrix_linear requires n = k^2, got n={n}, k={k}")
    if species == "polynomial_basis":
        basis = _require(system, "basis", "system")
        if not isinstance(basis, list) or len(basis) != n:
            raise ConfigError(f"system.basis must list n={n} maps")

    alpha0 = np.asarray(_require(system, "alpha0", "system"), dtype=float)
    if species == "matrix_linear":
        if alpha0.shape not in ((k, k), (k * k,)):
            raise ConfigError(
                f"system.alpha0 must be {k}x{k} (or flat length {k * k}), "
                f"got shape {alpha0.shape}"
            )
        alpha0 = alpha0.reshape(-1)
    else:
        if alpha0.reshape(-1).shape[0] != n:
            raise ConfigError(f"system.alpha0 must have length n={n}")
        alpha0 = alpha0.reshape(-1)
    x0 = np.asarray(_require(system, "x0", "system"), dtype=float).reshape(-1)
    if x0.shape[0] != k:
        raise ConfigError(f"system.x0 must have length k={k}, got {x0.shape[0]}")
    if not np.all(np.isfinite(alpha0)) or not np.all(np.isfinite(x0)):
        raise ConfigError("system.alpha0/x0 must be finite")

    obs = _require(raw, "observation", "")
    h = _as_float(_require(obs, "h", "observation"), "observation.h")
    m = _as_int(_require(obs, "m", "observation"), "observation.m")
    tol = _as_float(obs.get("tol", DEFAULTS.integrator_tol), "observation.tol")
    if h <= 0.0 or m < 1:
        raise ConfigError("observation.h must be > 0 and observation.m >= 1")

    noise = raw.get("noise", {})
    sigma = _as_float(noise.get("sigma", 0.0), "noise.sigma")
    seed = _as_int(noise.get("seed", 0), "noise.seed")
    if sigma < 0.0:
        raise ConfigError("noise.sigma must be >= 0")
    if seed_override is not None:
        seed = seed_override

    solver = dict(raw.get("solver", {}))
    if seed_override is not None:
        solver["seed"] = seed_override

    return ExperimentConfig(raw=raw, digest=digest, species=species, k=k, n=n,
                            alpha0=alpha0, x0=x0, h=h, m=m, tol=tol,
                            sigma=sigma, seed=seed, solver=solver)


# ---------------------------------------------------------------------------
# output helpers


def _write_json(path, payload: dict, cfg: ExperimentConfig) -> None:
    payload = dict(payload)
    payload["toolkit_version"] = __version__
    payload["config_digest"] = cfg.digest
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(config_path, out_path, seed_override: int | None = None) -> int:
    cfg = load_config(config_path, seed_override)
    sys_obj = cfg.build_system()
    traj = integrate(sys_obj, cfg.alpha0, cfg.x0, t_end=cfg.h * cfg.m,
                     samples=cfg.m, tol=cfg.tol)
    grid = ObservationGrid.from_trajectory(traj)
    if cfg.sigma > 0.0:
        grid = add_noise(grid, cfg.sigma, cfg.seed)
    write_trajectory_csv(out_path, grid.times, grid.values)
    print(f"simulate: wrote {cfg.m} samples (h={cfg.h:g}, sigma={cfg.sigma:g}) "
          f"to {out_path}")
    return EXIT_OK


def cmd_certify(config_path, out_path, seed_override: int | None = None) -> int:
    cfg = load_config(config_path, seed_override)
    handle = cfg.build_handle()
    solver = cfg.solver
    r_work = _as_float(solver.get("r_work", 0.5), "solver.r_work")
    gamma_samples = _as_int(solver.get("gamma_samples", 32), "solver.gamma_samples")
    safety = _as_float(solver.get("safety", DEFAULTS.gamma_safety), "solver.safety")
    seed = _as_int(solver.get("seed", 0), "solver.seed")
    pairs = _as_int(solver.get("verify_pairs", 1000), "solver.verify_pairs")
    try:
        cert = certify_radius(handle, cfg.alpha0, r_work=r_work,
                              gamma_samples=gamma_samples, safety=safety, seed=seed)
    except NotIdentifiableError as exc:
        _write_json(out_path, {"not_identifiable": True,
                               "diagnostics": exc.diagnostics}, cfg)
        print(f"certify: NOT identifiable (beta={exc.diagnostics['beta']:.3e}, "
              f"rank={exc.diagnostics['rank']}/{exc.diagnostics['n_params']})")
        return EXIT_NOT_IDENTIFIABLE
    report = verify_lower_bound(handle, cert, pair_count=pairs, seed=seed)
    _write_json(out_path, {"certificate": cert.to_dict(),
                           "verification": report.to_dict()}, cfg)
    print(f"certify: beta={cert.beta:.6g} gamma={cert.gamma:.6g} "
          f"r_cert={cert.r_cert:.6g}; verified {report.pairs_tested} pairs, "
          f"{report.violations} violations")
    return EXIT_OK


def cmd_analyze_linear(config_path, out_path, k_max: int | None = None,
                       seed_override: int | None = None) -> int:
    cfg = load_config(config_path, seed_override)
    if cfg.species != "matrix_linear":
        raise ConfigError("analyze-linear requires the matrix_linear species")
    if k_max is None:
        k_max = _as_int(cfg.solver.get("k_max", DEFAULTS.k_max), "solver.k_max")
    amat = as_square(cfg.alpha0.reshape(cfg.k, cfg.k))
    report = degeneracy_report(amat, cfg.x0, cfg.h)
    try:
        branches = log_branches(amat, cfg.h, k_max=k_max)
        branch_dict = branches.to_dict()
        n_branches = len(branches.branches)
    except DefectiveMatrixError:
        branch_dict = None
        n_branches = 0
    rank_report = full_rank_check(amat, cfg.x0, cfg.h, cfg.m, tol=cfg.tol)
    divdiff = None
    if not report.double_eigenvalue and cfg.k >= 2:
        try:
            numeric, closed = exp_divided_difference_determinant(report.eigenvalues)
            divdiff = {"numeric": [numeric.real, numeric.imag],
                       "closed_form": [closed.real, closed.imag]}
        except DomainError:
            pass
    _write_json(out_path, {
        "degeneracy": report.to_dict(),
        "branches": branch_dict,
        "full_rank": rank_report.to_dict(),
        "divided_difference_determinant": divdiff,
    }, cfg)
    print(f"analyze-linear: in_set_A={report.in_set_A} "
          f"aliasing={len(report.aliasing_pairs)} x0_in_E={report.x0_in_E} "
          f"branches={n_branches} full_rank={rank_report.full}")
    return EXIT_OK


def cmd_invert(config_path, obs_path, mode: str, out_path,
               seed_override: int | None = None) -> int:
    if mode not in ("fd", "gn"):
        raise ConfigError(f"mode must be 'fd' or 'gn', got '{mode}'")
    cfg = load_config(config_path, seed_override)
    grid = ObservationGrid.from_csv(obs_path)
    sys_obj = cfg.build_system()
    if grid.values.shape[1] != cfg.k:
        raise ConfigError(
            f"observations have {grid.values.shape[1]} state columns, "
            f"config expects k={cfg.k}"
        )

    if mode == "fd":
        try:
            result = fd_linear_estimate(grid, sys_obj)
        except (DomainError, DimensionError) as exc:
            raise ConfigError(str(exc)) from exc
    else:
        handle = cfg.build_handle()
        if (grid.times.shape[0] != cfg.m
                or abs(grid.delta_t - cfg.h) > 1e-9 * cfg.h
                or abs(grid.times[0] - cfg.h) > 1e-9 * cfg.h):
            raise ConfigError(
                "observation grid does not match the configured (h, m)"
            )
        if "init" not in cfg.solver:
            raise ConfigError("solver.init is required for gauss-newton inversion")
        init = np.asarray(cfg.solver["init"], dtype=float).reshape(-1)
        if init.shape[0] != cfg.n:
            raise ConfigError(f"solver.init must have length n={cfg.n}")
        result = gauss_newton_invert(handle, grid.values.ravel(), init,
                                     options=cfg.gauss_newton_options())

    _write_json(out_path, {"mode": mode, "result": result.to_dict()}, cfg)
    ok = result.converged and not result.rank_deficient
    status = "converged" if result.converged else "NOT converged"
    if result.rank_deficient:
        status += ", rank deficient"
    print(f"invert[{mode}]: {status}; residual={result.residual:.6g} "
          f"iterations={result.iterations}")
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def cmd_zeta_scan(config_path, out_path, seed_override: int | None = None) -> int:
    cfg = load_config(config_path, seed_override)
    scan = cfg.solver.get("scan")
    if not isinstance(scan, dict):
        raise ConfigError("solver.scan block is required for zeta-scan")
    for key in ("t_values", "alpha_box", "x_box", "grid"):
        if key not in scan:
            raise ConfigError(f"missing required key 'solver.scan.{key}'")
    handle = cfg.build_handle()
    try:
        result = zeta_scan(handle, scan["t_values"], scan["alpha_box"],
                           scan["x_box"], scan["grid"],
                           rank_tol=_as_float(scan.get("rank_tol", 1e-12),
                                              "solver.scan.rank_tol"))
    except (DomainError, DimensionError) as exc:
        raise ConfigError(str(exc)) from exc
    Path(out_path).write_text("\n".join(result.csv_lines()) + "\n")
    frac = result.flagged_fraction
    print(f"zeta-scan: {len(result.cells)} cells, flagged fraction "
          f"{frac if math.isnan(frac) else round(frac, 6)}, "
          f"{result.failed_count} failed")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odeident",
        description="Identifiability certificates and parameter recovery "
                    "for sampled ODE systems",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--out", required=True, help="output path")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seeds")

    p = sub.add_parser("simulate", help="integrate and write the sample CSV")
    common(p)
    p = sub.add_parser("certify", help="injectivity certificate + verification")
    common(p)
    p = sub.add_parser("analyze-linear", help="degeneracy/branch/rank report")
    common(p)
    p.add_argument("--kmax", type=int, default=None, help="branch shift bound")
    p = sub.add_parser("invert", help="recover parameters from observations")
    common(p)
    p.add_argument("--obs", required=True, help="observation CSV")
    p.add_argument("--mode", required=True, choices=("fd", "gn"))
    p = sub.add_parser("zeta-scan", help="det(J^T J) lattice scan")
    common(p)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out, args.seed)
        if args.command == "certify":
            return cmd_certify(args.config, args.out, args.seed)
        if args.command == "analyze-linear":
            return cmd_analyze_linear(args.config, args.out, args.kmax, args.seed)
        if args.command == "invert":
            return cmd_invert(args.config, args.obs, args.mode, args.out, args.seed)
        if args.command == "zeta-scan":
            return cmd_zeta_scan(args.config, args.out, args.seed)
        raise ConfigError(f"unknown command {args.command}")  # pragma: no cover
    except (ConfigError, InputFormatError, DimensionError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (IntegrationError, RangeError, ConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except NotIdentifiableError as exc:
        print(f"not identifiable: {exc}", file=sys.stderr)
        return EXIT_NOT_IDENTIFIABLE


def entry() -> None:  # console-script shim
    sys.exit(main())


if __name__ == "__main__":
    entry()
