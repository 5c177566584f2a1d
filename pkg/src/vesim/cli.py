"""Command-line front end: gen-ic, run, verify, limit, plot, audit.

Configuration may come from a flat key=value file (--config); explicit flags
override file entries. Exit codes: 0 for success and reported findings, 1 for
numerical divergence or manufacture failure, 2 for usage/config errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .constraints import (
    AdmissibleIC,
    constraint_residuals,
    gen_divfree_velocity,
    manufacture_strain,
    taylor_green,
)
from .diagnostics import (
    ThresholdConfig,
    audit_energy_csv,
    read_csv,
    record_row,
    CSV_COLUMNS,
)
from .dynamics import State, StepperConfig, run as run_dynamics
from .errors import ConfigError, ContractError, DivergenceError, ManufactureError, VesimError
from .mach import limit_study
from .snapshots import read_field, write_field, write_sidecar
from .spectral import Field, Grid
from .svgplot import line_plot_svg

PRESETS = ("equilibrium", "taylor-green", "small-data")


def _load_config_file(path: str) -> dict:
    """Flat key=value lines; '#' starts a comment; keys use flag spelling."""
    out = {}
    for ln, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}", f"expected key=value, got {raw!r}")
        key, val = line.split("=", 1)
        out[key.strip().replace("-", "_")] = val.strip()
    return out


def _apply_config(parser: argparse.ArgumentParser, argv: list) -> list:
    """Fold --config file values in as subcommand defaults (flags still win)."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        parser.error("--config needs a file path")
    if not argv or argv[0].startswith("-"):
        raise ConfigError("config", "--config requires a subcommand")
    sub = parser.subcommands.get(argv[0])
    if sub is None:
        raise ConfigError("config", f"unknown subcommand {argv[0]!r}")
    cfg = _load_config_file(argv[idx + 1])
    known = {a.dest for a in sub._actions}
    bad = set(cfg) - known
    if bad:
        raise ConfigError(sorted(bad)[0], "unknown config key")
    sub.set_defaults(**cfg)
    return argv[:idx] + argv[idx + 2 :]


def _bool_flag(v) -> bool:
    if isinstance(v, bool):
        return v
    if str(v).lower() in ("on", "true", "1", "yes"):
        return True
    if str(v).lower() in ("off", "false", "0", "no"):
        return False
    raise ConfigError("flag", f"expected on/off, got {v!r}")


def _build_ic(args) -> AdmissibleIC:
    """Resolve --ic: a snapshot directory or a named preset."""
    spec = getattr(args, "ic", None) or "small-data"
    if spec not in PRESETS and Path(spec).is_dir():
        return load_ic(Path(spec))
    grid = Grid(int(args.dim), int(args.n))
    if spec == "equilibrium":
        v0 = Field.zeros(grid, 1)
        E0 = Field.zeros(grid, 2)
        return AdmissibleIC(v0, E0, constraint_residuals(v0, E0))
    if spec == "taylor-green":
        v0 = taylor_green(grid, float(args.amplitude))
        E0 = Field.zeros(grid, 2)
        return AdmissibleIC(v0, E0, constraint_residuals(v0, E0))
    if spec == "small-data":
        v = gen_divfree_velocity(
            grid,
            seed=int(args.seed),
            amplitude=float(args.amplitude),
            peak_k=int(args.peak_k),
            decay=float(args.decay),
        )
        return manufacture_strain(v, float(args.s_end), int(args.steps), tol=float(args.tol))
    raise ConfigError("ic", f"not a preset or snapshot directory: {spec!r}")


def save_ic(out: Path, ic: AdmissibleIC, provenance: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_field(out / "v0.vesf", ic.v0)
    write_sidecar(out / "v0.vesf", t=0.0, mu=None, provenance=provenance)
    write_field(out / "E0.vesf", ic.E0)
    write_sidecar(out / "E0.vesf", t=0.0, mu=None, provenance=provenance)
    report = {"residuals": ic.residuals.as_dict(), "residuals_l2": ic.residuals.l2}
    (out / "residuals.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def load_ic(path: Path) -> AdmissibleIC:
    v0 = read_field(path / "v0.vesf")
    E0 = read_field(path / "E0.vesf", grid=v0.grid)
    return AdmissibleIC(v0, E0, constraint_residuals(v0, E0))


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_ic(args) -> int:
    for key in ("dim", "n"):
        if getattr(args, key) is None:
            raise ConfigError(key, "required (flag or config file)")
    grid = Grid(int(args.dim), int(args.n))
    if args.preset == "taylor-green":
        v = taylor_green(grid, float(args.amplitude))
    elif args.preset == "random":
        v = gen_divfree_velocity(
            grid,
            seed=int(args.seed),
            amplitude=float(args.amplitude),
            peak_k=int(args.peak_k),
            decay=float(args.decay),
        )
    else:
        raise ConfigError("preset", f"unknown generator preset {args.preset!r}")
    ic = manufacture_strain(v, float(args.s_end), int(args.steps), tol=float(args.tol))
    prov = {
        "tool": f"vesim {__version__} gen-ic",
        "preset": args.preset,
        "seed": int(args.seed),
        "amplitude": float(args.amplitude),
        "s_end": float(args.s_end),
        "steps": int(args.steps),
    }
    save_ic(Path(args.out), ic, prov)
    print(f"wrote {args.out}: max residual {ic.residuals.max():.3e}")
    return 0


def cmd_run(args) -> int:
    ic = _build_ic(args)
    cfg = StepperConfig(
        dt=None if args.dt is None else float(args.dt),
        cfl=float(args.cfl),
        scheme=args.scheme,
        dealias=_bool_flag(args.dealias),
        conservative_stress=_bool_flag(args.conservative_stress),
        fluid_only=_bool_flag(args.fluid_only),
        dt_max=float(args.dt_max),
    )
    threshold = ThresholdConfig(
        C_big=float(args.c_big),
        M_big=None if args.m_big is None else float(args.m_big),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mu = float(args.mu)

    csv_path = out / "diagnostics.csv"
    csv_file = csv_path.open("w")
    csv_file.write(",".join(CSV_COLUMNS) + "\n")

    def record_sink(rec):
        csv_file.write(record_row(rec) + "\n")

    snap_index = [0]

    def snapshot_sink(state: State):
        tag = f"{snap_index[0]:05d}"
        prov = {"tool": f"vesim {__version__} run", "step_tag": tag}
        write_field(out / f"v_{tag}.vesf", state.v)
        write_sidecar(out / f"v_{tag}.vesf", t=state.t, mu=mu, provenance=prov)
        write_field(out / f"E_{tag}.vesf", state.E)
        write_sidecar(out / f"E_{tag}.vesf", t=state.t, mu=mu, provenance=prov)
        snap_index[0] += 1

    try:
        summary = run_dynamics(
            ic,
            mu=mu,
            t_end=float(args.t_end),
            cfg=cfg,
            threshold=threshold,
            diag_every=int(args.diag_every),
            snapshot_every=int(args.snapshot_every),
            drift_budget=float(args.drift_budget),
            blowup_cap=float(args.blowup_cap),
            record_sink=record_sink,
            snapshot_sink=snapshot_sink if int(args.snapshot_every) > 0 else None,
        )
    finally:
        csv_file.close()

    (out / "summary.json").write_text(
        json.dumps(
            {
                "status": summary.status,
                "steps": summary.steps,
                "t_final": summary.t_final,
                "annotations": summary.annotations,
                "error": summary.error,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    for note in summary.annotations:
        print(f"note: {note}")
    print(f"{summary.status}: {summary.steps} steps to t={summary.t_final:.6g}; wrote {csv_path}")
    return 1 if summary.status == "diverged" else 0


def cmd_verify(args) -> int:
    path = Path(args.ic)
    if path.is_dir():
        v = read_field(path / "v0.vesf")
        E = read_field(path / "E0.vesf", grid=v.grid)
    else:
        v = read_field(args.v_file)
        E = read_field(args.e_file, grid=v.grid)
    res = constraint_residuals(v, E)
    tol = float(args.tol)
    checks = {name: {"value": val, "pass": bool(val <= tol)} for name, val in res.as_dict().items()}
    report = {
        "tolerance": tol,
        "checks": checks,
        "all_pass": all(c["pass"] for c in checks.values()),
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return 0


def cmd_limit(args) -> int:
    ic = _build_ic(args)
    lambdas = [float(tok) for tok in str(args.lambdas).split(",") if tok]
    result = limit_study(
        ic,
        lambdas,
        T_win=float(args.t_win),
        mu=float(args.mu),
        delta0=float(args.delta0),
        seed=int(args.limit_seed),
        s=int(args.sobolev),
        n_samples=int(args.n_samples),
        cfl=float(args.cfl),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["lambda,sup_error,projected_error,max_es,steps,wall_time"]
    for i, lam in enumerate(result.lambdas):
        err = result.errors[i]
        perr = result.proj_errors[i]
        lines.append(
            ",".join(
                [
                    f"{lam:.17g}",
                    "nan" if err is None else f"{err:.17g}",
                    "nan" if perr is None else f"{perr:.17g}",
                    f"{max(result.es_energies[i]):.17g}",
                    str(result.steps[i]),
                    f"{result.wall_times[i]:.3f}",
                ]
            )
        )
    (out / "study.csv").write_text("\n".join(lines) + "\n")
    for i, lam in enumerate(result.lambdas):
        rows = ["t,es"]
        for t, es in zip(result.sample_times, result.es_energies[i]):
            rows.append(f"{t:.17g},{es:.17g}")
        (out / f"diag_lambda_{lam:g}.csv").write_text("\n".join(rows) + "\n")
    (out / "rates.json").write_text(json.dumps(result.rates, indent=2, sort_keys=True) + "\n")
    if result.failures:
        for lam, msg in result.failures:
            print(f"partial result: lambda={lam:g} failed: {msg}")
    rate = result.rates.get("projected")
    print(
        f"wrote {out / 'study.csv'}; projected rate "
        + ("undefined" if rate is None else f"{rate:.3f}")
    )
    return 0


def cmd_plot(args) -> int:
    cols = read_csv(args.csv)
    xname = args.x
    if xname not in cols:
        raise ConfigError("x", f"unknown column {xname!r}")
    names = [c for c in str(args.columns).split(",") if c]
    for name in names:
        if name not in cols:
            raise ConfigError("columns", f"unknown column {name!r}")
    series = [(name, cols[xname], [float(v) for v in cols[name]]) for name in names]
    svg = line_plot_svg(
        series,
        title=args.title or Path(args.csv).name,
        xlabel=xname,
        ylabel=",".join(names) if len(names) <= 2 else "",
        logx=args.logx,
        logy=args.logy,
    )
    Path(args.out).write_text(svg)
    print(f"wrote {args.out}")
    return 0


def cmd_audit(args) -> int:
    report = audit_energy_csv(args.csv)
    report["relative_max_drift"] = (
        abs(report["max_drift"]) / report["initial_energy"]
        if report["initial_energy"] > 0
        else 0.0
    )
    report["pass"] = report["relative_max_drift"] <= float(args.tol)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_grid_args(p, required: bool = False):
    # "required" flags keep None defaults so a --config file may still supply
    # them; the subcommand rejects a missing value as a usage error
    p.add_argument(
        "--dim", default=None if required else 2, type=int,
        help="spatial dimension (2 or 3)",
    )
    p.add_argument(
        "--n", default=None if required else 64, type=int,
        help="grid points per axis (power of two)",
    )


def _add_generator_args(p):
    p.add_argument("--seed", default=42, type=int, help="random generator seed")
    p.add_argument("--amplitude", default=0.05, type=float, help="velocity amplitude")
    p.add_argument("--peak-k", default=2, type=int, dest="peak_k", help="spectral bump center")
    p.add_argument("--decay", default=1.0, type=float, help="spectral bump width")
    p.add_argument("--s-end", default=0.1, type=float, dest="s_end", help="pseudo-time horizon")
    p.add_argument("--steps", default=50, type=int, help="pseudo-time RK4 steps")
    p.add_argument("--tol", default=1e-6, type=float, help="manufacture tolerance")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vesim",
        description="Pseudo-spectral incompressible viscoelastic fluid simulator",
    )
    parser.add_argument("--version", action="version", version=f"vesim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = {}

    p = sub.add_parser("gen-ic", help="manufacture admissible initial data")
    _add_grid_args(p, required=True)
    p.add_argument("--preset", default="taylor-green", choices=("taylor-green", "random"))
    _add_generator_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="key=value config file")
    p.set_defaults(func=cmd_gen_ic)
    parser.subcommands["gen-ic"] = p

    p = sub.add_parser("run", help="integrate the viscoelastic system")
    _add_grid_args(p)
    p.add_argument("--mu", default=1.0, type=float, help="viscosity")
    p.add_argument("--t-end", default=1.0, type=float, dest="t_end")
    p.add_argument("--dt", default=None, help="fixed step size (default: CFL rule)")
    p.add_argument("--cfl", default=0.5, type=float)
    p.add_argument("--scheme", default="imex-cn-rk2", choices=("imex-cn-rk2", "erk4"))
    p.add_argument("--dealias", default="on", help="on|off")
    p.add_argument("--conservative-stress", default="on", dest="conservative_stress")
    p.add_argument("--fluid-only", default="off", dest="fluid_only")
    p.add_argument("--dt-max", default=0.1, type=float, dest="dt_max")
    p.add_argument("--ic", default="small-data", help="preset name or snapshot directory")
    _add_generator_args(p)
    p.add_argument("--c-big", default=1.0, type=float, dest="c_big")
    p.add_argument("--m-big", default=None, dest="m_big")
    p.add_argument("--drift-budget", default=1e-5, type=float, dest="drift_budget")
    p.add_argument("--blowup-cap", default=float("inf"), type=float, dest="blowup_cap")
    p.add_argument("--diag-every", default=10, type=int, dest="diag_every")
    p.add_argument("--snapshot-every", default=0, type=int, dest="snapshot_every")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="key=value config file")
    p.set_defaults(func=cmd_run)
    parser.subcommands["run"] = p

    p = sub.add_parser("verify", help="check constraints on a saved snapshot pair")
    p.add_argument("--ic", default="", help="snapshot directory (v0.vesf, E0.vesf)")
    p.add_argument("--v-file", dest="v_file", help="velocity snapshot path")
    p.add_argument("--e-file", dest="e_file", help="strain snapshot path")
    p.add_argument("--tol", default=1e-6, type=float)
    p.add_argument("--out", default=None, help="optional JSON report path")
    p.set_defaults(func=cmd_verify)
    parser.subcommands["verify"] = p

    p = sub.add_parser("limit", help="stiff-pressure incompressible-limit sweep")
    _add_grid_args(p)
    p.add_argument("--mu", default=1.0, type=float)
    p.add_argument("--lambdas", default="5,10,20,40")
    p.add_argument("--t-win", default=1.0, type=float, dest="t_win")
    p.add_argument("--delta0", default=0.05, type=float)
    p.add_argument("--s", default=4, type=int, dest="sobolev", help="Sobolev order for E_s")
    p.add_argument("--limit-seed", default=7, type=int, dest="limit_seed")
    p.add_argument("--n-samples", default=20, type=int, dest="n_samples")
    p.add_argument("--cfl", default=0.5, type=float)
    p.add_argument("--ic", default="small-data", help="preset name or snapshot directory")
    _add_generator_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="key=value config file")
    p.set_defaults(func=cmd_limit)
    parser.subcommands["limit"] = p

    p = sub.add_parser("plot", help="render CSV columns as an SVG line plot")
    p.add_argument("csv")
    p.add_argument("--columns", required=True, help="comma-separated column names")
    p.add_argument("--x", default="t")
    p.add_argument("--logx", action="store_true")
    p.add_argument("--logy", action="store_true")
    p.add_argument("--title", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    parser.subcommands["plot"] = p

    p = sub.add_parser("audit", help="offline energy audit of a diagnostics CSV")
    p.add_argument("csv")
    p.add_argument("--tol", default=1e-6, type=float)
    p.set_defaults(func=cmd_audit)
    parser.subcommands["audit"] = p

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except (ConfigError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, ManufactureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except VesimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
