"""Command-line front end: config parsing, dispatch, structured output.

Configuration is a TOML document; command-line flags override document
fields. JSON is the canonical output format (CSV is available for the table
commands green and bubble). Every emitted file embeds the fully resolved
configuration and the library version, and files are written atomically via
a temp file and rename. Identical config and seed produce byte-identical
JSON.

Exit codes: 0 success, 2 validation or parse failure, 3 convergence failure,
4 identity-suite failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

try:
    import tomllib
except ImportError:  # python 3.10
    import tomli as tomllib

from . import __version__
from .core import Grid, min_value, parse_fn_spec
from .greens import greens_matrix, h_boundary_check, h_identity_residuals
from .locator import ConstantV, genericity_sweep, locate_critical, sweep_fraction
from .bubble import BubbleParams, project
from .nonlinear import (
    JacobianSingular,
    NoConvergence,
    NonPositiveIterate,
    SolverConfig,
    continue_branch,
    exp_lambda_schedule,
    pick_anchor,
)
from .operators import CoercivityFailure, OperatorModel, coercivity_check

__all__ = [
    "ParseError",
    "ValidationError",
    "RunConfig",
    "VerifyReport",
    "parse_config",
    "run_verify",
    "main",
]

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3
EXIT_IDENTITY = 4

# Default tolerances for the identity suite, keyed like the report.
VERIFY_TOLS = {
    "res_ii": 1e-4,
    "res_iii": 1e-4,
    "res_iv": 1e-3,
    "boundary": 1e-3,
    "corner": 1e-4,
    "closed_form": 1e-3,
}


class ParseError(ValueError):
    """Malformed configuration document or flag value."""


class ValidationError(ValueError):
    """Well-formed configuration with inadmissible content."""


@dataclass
class RunConfig:
    """Resolved configuration with every default filled in."""

    f_spec: str = "trig:2,1"
    kappa_spec: str = "const:1"
    n: int = 1
    grid_N: int = 1024
    seed: int = 1234
    out: Optional[str] = None
    fmt: str = "json"

    locate_tol: Optional[float] = None
    nd_threshold: float = 1e-3

    gen_perturb: str = "f"
    gen_rho: float = 0.05
    gen_trials: int = 50
    gen_grid_N: Optional[int] = None

    bubble_eps: float = 0.05
    bubble_s: float = 0.5

    exp_eps0: float = 0.03
    exp_steps: int = 12
    exp_ratio: float = 0.5

    power_p_list: tuple = (40.0, 80.0, 160.0, 320.0)

    newton_tol: float = 1e-10
    max_iter: int = 50
    max_halvings: int = 30

    verify_tol: Optional[float] = None

    lambda_min: float = field(default=float("nan"), init=False)

    def model(self) -> OperatorModel:
        return OperatorModel(parse_fn_spec(self.f_spec), parse_fn_spec(self.kappa_spec), self.n)

    def as_dict(self) -> dict:
        return {
            "f": self.f_spec,
            "kappa": self.kappa_spec,
            "n": self.n,
            "grid_N": self.grid_N,
            "seed": self.seed,
            "format": self.fmt,
            "locate": {"tol": self.locate_tol, "nd_threshold": self.nd_threshold},
            "genericity": {
                "perturb": self.gen_perturb,
                "rho": self.gen_rho,
                "trials": self.gen_trials,
                "grid_N": self.gen_grid_N,
            },
            "bubble": {"eps": self.bubble_eps, "s": self.bubble_s},
            "exp": {"eps0": self.exp_eps0, "steps": self.exp_steps, "ratio": self.exp_ratio},
            "power": {"p_list": list(self.power_p_list)},
            "newton": {
                "tol": self.newton_tol,
                "max_iter": self.max_iter,
                "max_halvings": self.max_halvings,
            },
            "verify": {"tol": self.verify_tol},
            "lambda_min": self.lambda_min,
            "version": __version__,
        }


# Map of TOML section -> key -> (RunConfig attribute, type coercion).
_SCHEMA = {
    "model": {
        "f": ("f_spec", str),
        "kappa": ("kappa_spec", str),
        "n": ("n", int),
    },
    "grid": {"n": ("grid_N", int)},
    "output": {"path": ("out", str), "format": ("fmt", str)},
    "locate": {"tol": ("locate_tol", float), "nd_threshold": ("nd_threshold", float)},
    "genericity": {
        "perturb": ("gen_perturb", str),
        "rho": ("gen_rho", float),
        "trials": ("gen_trials", int),
        "seed": ("seed", int),
        "grid_n": ("gen_grid_N", int),
    },
    "bubble": {"eps": ("bubble_eps", float), "s": ("bubble_s", float)},
    "exp": {
        "eps0": ("exp_eps0", float),
        "steps": ("exp_steps", int),
        "ratio": ("exp_ratio", float),
    },
    "power": {"p_list": ("power_p_list", tuple)},
    "newton": {
        "tol": ("newton_tol", float),
        "max_iter": ("max_iter", int),
        "max_halvings": ("max_halvings", int),
    },
    "verify": {"tol": ("verify_tol", float)},
}


def _coerce(section: str, key: str, value, kind):
    where = f"{section}.{key}"
    if kind is tuple:
        if not isinstance(value, (list, tuple)) or not value:
            raise ParseError(f"field {where} must be a nonempty list of numbers")
        try:
            return tuple(float(x) for x in value)
        except (TypeError, ValueError):
            raise ParseError(f"field {where} must contain only numbers") from None
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ParseError(f"field {where} must be an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParseError(f"field {where} must be a number, got {value!r}")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ParseError(f"field {where} must be a string, got {value!r}")
        return value
    raise AssertionError(f"unhandled schema type for {where}")


def parse_config(text: str, overrides: Optional[dict] = None) -> RunConfig:
    """Parse and validate a TOML configuration document.

    overrides maps RunConfig attribute names to values that replace the
    document's (command-line flags). Raises ParseError for malformed input
    and ValidationError when the model it describes is inadmissible.
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"config is not valid TOML: {exc}") from exc

    cfg = RunConfig()
    for section, table in doc.items():
        if section not in _SCHEMA:
            raise ParseError(f"unknown config section [{section}]")
        if not isinstance(table, dict):
            raise ParseError(f"section [{section}] must be a table")
        for key, value in table.items():
            if key not in _SCHEMA[section]:
                raise ParseError(f"unknown key {section}.{key}")
            attr, kind = _SCHEMA[section][key]
            setattr(cfg, attr, _coerce(section, key, value, kind))

    for attr, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, attr, value)

    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.fmt not in ("json", "csv"):
        raise ParseError(f"output format must be json or csv, got {cfg.fmt!r}")
    if cfg.grid_N < 16:
        raise ValidationError(f"grid must have at least 16 points, got {cfg.grid_N}")
    if cfg.gen_grid_N is not None and cfg.gen_grid_N < 16:
        raise ValidationError(
            f"sweep grid must have at least 16 points, got {cfg.gen_grid_N}"
        )

    try:
        f = parse_fn_spec(cfg.f_spec)
        kappa = parse_fn_spec(cfg.kappa_spec)
    except ValueError as exc:
        raise ParseError(str(exc)) from exc

    fmin = min_value(f, scan_n=4 * cfg.grid_N)
    if fmin <= 0.0:
        raise ValidationError(
            f"warping f = {cfg.f_spec!r} is not positive: scan minimum {fmin:g}"
        )
    try:
        model = OperatorModel(f, kappa, cfg.n)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc

    check_n = min(cfg.grid_N, 512)
    ok, lam = coercivity_check(model, Grid(check_n))
    cfg.lambda_min = lam
    if not ok:
        raise ValidationError(
            f"CoercivityFailure: potential {cfg.kappa_spec!r} gives "
            f"lambda_min = {lam:.6g} <= 0 at N = {check_n}"
        )


@dataclass
class VerifyReport:
    """Identity-suite residuals at two grids with pass/fail bookkeeping."""

    grid_N: int
    residuals: dict
    residuals_fine: dict
    orders: dict
    tolerances: dict
    closed_form_error: Optional[float]
    passed: bool

    def as_dict(self) -> dict:
        return {
            "grid_N": self.grid_N,
            "residuals": self.residuals,
            "residuals_fine": self.residuals_fine,
            "orders": self.orders,
            "tolerances": self.tolerances,
            "closed_form_error": self.closed_form_error,
            "passed": self.passed,
        }


def _identity_residuals(model: OperatorModel, grid: Grid) -> dict:
    t = greens_matrix(model, grid)
    res_ii, res_iii, res_iv = h_identity_residuals(t)
    hd = t.h_diag
    # Seam continuity of the diagonal sequence: cubic extrapolation of the
    # last four nodes to r = 1 must land on the r = 0 value.
    corner = abs(4.0 * hd[-1] - 6.0 * hd[-2] + 4.0 * hd[-3] - hd[-4] - hd[0])
    return {
        "res_ii": res_ii,
        "res_iii": res_iii,
        "res_iv": res_iv,
        "boundary": h_boundary_check(t),
        "corner": float(corner),
        "_tables": t,
    }


def _closed_form_g(c: float, grid: Grid) -> np.ndarray:
    r = grid.nodes[:, None]
    s = grid.nodes[None, :]
    root = math.sqrt(c)
    return np.cosh(root * (np.abs(r - s) - 0.5)) / (2.0 * root * math.sinh(root / 2.0))


def run_verify(cfg: RunConfig) -> VerifyReport:
    """Run the kernel identity suite at N and 2N and grade the residuals."""
    model = cfg.model()
    coarse = _identity_residuals(model, Grid(cfg.grid_N))
    fine = _identity_residuals(model, Grid(2 * cfg.grid_N))
    tables = coarse.pop("_tables")
    fine.pop("_tables")

    # Below this size a residual is treated as sitting at the rounding floor,
    # where convergence orders stop being meaningful.
    floor = 1e-12
    orders = {}
    for key in coarse:
        lo, hi = fine[key], coarse[key]
        if hi > floor and lo > floor:
            orders[key] = math.log2(hi / lo)
        else:
            orders[key] = None

    tols = dict(VERIFY_TOLS)
    if cfg.verify_tol is not None:
        tols = {key: cfg.verify_tol for key in tols}

    closed = None
    if cfg.f_spec.startswith("const:") and cfg.kappa_spec.startswith("const:"):
        c = float(cfg.kappa_spec.split(":", 1)[1])
        if c > 0.0:
            closed = float(np.max(np.abs(tables.G - _closed_form_g(c, tables.grid))))

    passed = all(coarse[key] < tols[key] for key in coarse)
    if closed is not None:
        passed = passed and closed < tols["closed_form"]

    return VerifyReport(
        grid_N=cfg.grid_N,
        residuals=coarse,
        residuals_fine=fine,
        orders=orders,
        tolerances=tols,
        closed_form_error=closed,
        passed=passed,
    )


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _emit_json(payload: dict, cfg: RunConfig, default_name: str) -> str:
    payload = {"config": cfg.as_dict(), "version": __version__, **payload}
    path = cfg.out or default_name
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def _emit_csv(path: str, header: list, columns: list) -> None:
    rows = np.column_stack(columns)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(x)) for x in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _cmd_green(cfg: RunConfig) -> int:
    model = cfg.model()
    grid = Grid(cfg.grid_N)
    t = greens_matrix(model, grid)
    res_ii, res_iii, res_iv = h_identity_residuals(t)

    if cfg.fmt == "csv":
        stem = os.path.splitext(cfg.out or "tables.csv")[0]
        paths = []
        for name, table in (("G", t.G), ("Gamma", t.Gamma), ("H", t.H)):
            p = f"{stem}_{name}.csv"
            _atomic_write(p, "\n".join(",".join(repr(float(x)) for x in row) for row in table) + "\n")
            paths.append(p)
        p = f"{stem}_diag.csv"
        _emit_csv(
            p,
            ["r", "h_diag", "v_diag", "Hr_diag", "Hs_diag", "Hrr_diag", "Hrs_diag"],
            [grid.nodes, t.h_diag, t.v_diag, t.Hr_diag, t.Hs_diag, t.Hrr_diag, t.Hrs_diag],
        )
        paths.append(p)
        print("\n".join(paths))
        return EXIT_OK

    path = _emit_json(
        {
            "grid_N": grid.n,
            "nodes": grid.nodes.tolist(),
            "lambda_min": t.lambda_min,
            "G": t.G.tolist(),
            "Gamma": t.Gamma.tolist(),
            "H": t.H.tolist(),
            "h_diag": t.h_diag.tolist(),
            "v_diag": t.v_diag.tolist(),
            "Hr_diag": t.Hr_diag.tolist(),
            "Hs_diag": t.Hs_diag.tolist(),
            "Hrr_diag": t.Hrr_diag.tolist(),
            "Hrs_diag": t.Hrs_diag.tolist(),
            "residuals": {
                "res_ii": res_ii,
                "res_iii": res_iii,
                "res_iv": res_iv,
                "boundary": h_boundary_check(t),
            },
        },
        cfg,
        "tables.json",
    )
    print(path)
    return EXIT_OK


def _cmd_locate(cfg: RunConfig) -> int:
    model = cfg.model()
    t = greens_matrix(model, Grid(cfg.grid_N))
    try:
        reports = locate_critical(t, tol=cfg.locate_tol, nd_threshold=cfg.nd_threshold)
        payload = {
            "constant_v": False,
            "reports": [rep.as_dict() for rep in reports],
            "lambda_min": t.lambda_min,
        }
    except ConstantV as exc:
        payload = {
            "constant_v": True,
            "reports": [],
            "detail": str(exc),
            "lambda_min": t.lambda_min,
        }
    path = _emit_json(payload, cfg, "locate.json")
    print(path)
    return EXIT_OK


def _cmd_genericity(cfg: RunConfig) -> int:
    model = cfg.model()
    samples = genericity_sweep(
        model,
        cfg.gen_perturb,
        cfg.gen_rho,
        cfg.gen_trials,
        cfg.seed,
        grid=Grid(cfg.gen_grid_N if cfg.gen_grid_N is not None else cfg.grid_N),
        tol=cfg.locate_tol,
        nd_threshold=cfg.nd_threshold,
    )
    frac = sweep_fraction(samples)
    payload = {
        "trials": cfg.gen_trials,
        "admissible": sum(1 for s in samples if s.admissible),
        "fraction_all_nondegenerate": None if math.isnan(frac) else frac,
        "samples": [s.as_dict() for s in samples],
    }
    path = _emit_json(payload, cfg, "sweep.json")
    print(path)
    return EXIT_OK


def _cmd_bubble(cfg: RunConfig) -> int:
    model = cfg.model()
    grid = Grid(cfg.grid_N)
    bp = BubbleParams(eps=cfg.bubble_eps, s=cfg.bubble_s)
    prof = project(model, grid, bp)
    t = greens_matrix(model, grid)
    g_col = t.g_column_at(bp.s)
    limit = 2.0 * math.sqrt(2.0) * g_col

    if cfg.fmt == "csv":
        path = cfg.out or "profile.csv"
        _emit_csv(
            path,
            ["r", "U", "PU", "eps_PU", "two_sqrt2_G"],
            [grid.nodes, prof.U, prof.PU, bp.eps * prof.PU, limit],
        )
        print(path)
        return EXIT_OK

    path = _emit_json(
        {
            "eps": bp.eps,
            "s": bp.s,
            "r": grid.nodes.tolist(),
            "U": prof.U.tolist(),
            "PU": prof.PU.tolist(),
            "eps_PU": (bp.eps * prof.PU).tolist(),
            "two_sqrt2_G": limit.tolist(),
        },
        cfg,
        "profile.json",
    )
    print(path)
    return EXIT_OK


def _solver_config(cfg: RunConfig, schedule) -> SolverConfig:
    return SolverConfig(
        grid_N=cfg.grid_N,
        newton_tol=cfg.newton_tol,
        max_iter=cfg.max_iter,
        max_halvings=cfg.max_halvings,
        schedule=schedule,
    )


def _branch_payload(branch, t, family: str) -> dict:
    grid = Grid(branch.grid_N)
    g_col = t.g_column_at(branch.r0)
    if family == "power":
        limit = (g_col / branch.H00).tolist()
    else:
        limit = (2.0 * math.sqrt(2.0) * g_col).tolist()
    payload = branch.as_dict(with_solutions=True)
    payload["r"] = grid.nodes.tolist()
    payload["limit_profile"] = limit
    return payload


def _cmd_solve_exp(cfg: RunConfig) -> int:
    model = cfg.model()
    t = greens_matrix(model, Grid(cfg.grid_N))
    r0 = pick_anchor(t, cfg.nd_threshold)
    h00 = float(t.h_diag_at(r0))
    schedule = exp_lambda_schedule(h00, cfg.exp_eps0, cfg.exp_steps, cfg.exp_ratio)
    branch = continue_branch(model, "exp", _solver_config(cfg, schedule), tables=t, r0=r0)
    path = _emit_json(_branch_payload(branch, t, "exp"), cfg, "branch.json")
    print(path)
    return EXIT_CONVERGENCE if branch.truncated else EXIT_OK


def _cmd_solve_power(cfg: RunConfig) -> int:
    model = cfg.model()
    t = greens_matrix(model, Grid(cfg.grid_N))
    branch = continue_branch(
        model, "power", _solver_config(cfg, list(cfg.power_p_list)), tables=t
    )
    path = _emit_json(_branch_payload(branch, t, "power"), cfg, "branch.json")
    print(path)
    return EXIT_CONVERGENCE if branch.truncated else EXIT_OK


def _cmd_verify(cfg: RunConfig) -> int:
    report = run_verify(cfg)
    path = _emit_json({"verify": report.as_dict()}, cfg, "verify.json")
    print(path)
    print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_IDENTITY


_COMMANDS = {
    "green": _cmd_green,
    "locate": _cmd_locate,
    "genericity": _cmd_genericity,
    "bubble": _cmd_bubble,
    "solve-exp": _cmd_solve_exp,
    "solve-power": _cmd_solve_power,
    "verify": _cmd_verify,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="warpgreen",
        description="Periodic kernel tables, concentration diagnostics, and "
        "bubble continuation for warped circle models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML configuration file")
        p.add_argument("--f", dest="f_spec", help="warping spec, e.g. trig:2,1")
        p.add_argument("--kappa", dest="kappa_spec", help="potential spec, e.g. const:1")
        p.add_argument("--n", dest="n", type=int, help="fiber dimension")
        p.add_argument("--n-grid", dest="grid_N", type=int, help="grid points")
        p.add_argument("--seed", dest="seed", type=int, help="RNG seed")
        p.add_argument("--out", dest="out", help="output path")
        p.add_argument("--format", dest="fmt", choices=["json", "csv"], help="output format")
        if name == "locate":
            p.add_argument("--tol", dest="locate_tol", type=float)
            p.add_argument("--nd-threshold", dest="nd_threshold", type=float)
        elif name == "genericity":
            p.add_argument("--perturb", dest="gen_perturb", choices=["f", "kappa"])
            p.add_argument("--rho", dest="gen_rho", type=float)
            p.add_argument("--trials", dest="gen_trials", type=int)
            p.add_argument("--tol", dest="locate_tol", type=float)
            p.add_argument("--nd-threshold", dest="nd_threshold", type=float)
        elif name == "bubble":
            p.add_argument("--eps", dest="bubble_eps", type=float)
            p.add_argument("--s", dest="bubble_s", type=float)
        elif name == "solve-exp":
            p.add_argument("--eps0", dest="exp_eps0", type=float)
            p.add_argument("--steps", dest="exp_steps", type=int)
            p.add_argument("--ratio", dest="exp_ratio", type=float)
        elif name == "solve-power":
            p.add_argument("--p-list", dest="power_p_list",
                           help="comma-separated exponents, e.g. 40,80,160")
        elif name == "verify":
            p.add_argument("--tol", dest="verify_tol", type=float)
    return parser


def _overrides_from_args(args: argparse.Namespace) -> dict:
    skip = {"command", "config"}
    overrides = {}
    for key, value in vars(args).items():
        if key in skip or value is None:
            continue
        if key == "power_p_list" and isinstance(value, str):
            try:
                value = tuple(float(tok) for tok in value.split(",") if tok.strip())
            except ValueError:
                raise ParseError(f"--p-list must be comma-separated numbers, got {value!r}")
            if not value:
                raise ParseError("--p-list must not be empty")
        overrides[key] = value
    return overrides


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        text = ""
        if args.config:
            try:
                with open(args.config) as fh:
                    text = fh.read()
            except OSError as exc:
                raise ParseError(f"cannot read config file: {exc}") from exc
        cfg = parse_config(text, overrides=_overrides_from_args(args))
        if cfg.fmt == "csv" and args.command not in ("green", "bubble"):
            raise ValidationError(
                "csv output is only available for the table commands green and bubble"
            )
        return _COMMANDS[args.command](cfg)
    except (ParseError, ValidationError, CoercivityFailure, ConstantV, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NoConvergence, NonPositiveIterate, JacobianSingular) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
