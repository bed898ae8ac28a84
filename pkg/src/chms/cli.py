"""Command-line driver: simulation runs, refinement studies, structure checks.

Exit codes: 0 success, 2 configuration error, 3 solver abort (wave
breaking or non-convergence), 4 check-suite failure.
"""

from __future__ import annotations

import argparse
import json
import math
import numbers
import sys
from pathlib import Path

import numpy as np

from . import bridges, geometry_checks as gc
from .config import RunConfig, build_run_config, parse_config_file, parse_diagnostics
from .del_solver import EvolveResult, Section, evolve, initialize, row_action
from .errors import BadInitialData, ChmsError, ConfigError, OutOfRange
from .grid import classify_region
from .lagrangian import Stencil, hess_L

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_CHECK = 4


# ---------------------------------------------------------------------------
# Deterministic serialization: floats carry 17 significant digits so the
# files round-trip bit-exactly and identical configs give identical bytes.


def format_float(v: float) -> str:
    if math.isnan(v) or math.isinf(v):
        return json.dumps(repr(v))
    return format(float(v), ".17g")


def _json_value(v, indent: int) -> str:
    pad = "  " * (indent + 1)
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = ",\n".join(
            f"{pad}{json.dumps(str(key))}: {_json_value(val, indent + 1)}"
            for key, val in v.items()
        )
        return "{\n" + items + "\n" + "  " * indent + "}"
    if isinstance(v, (list, tuple)):
        if not len(v):
            return "[]"
        items = ",\n".join(f"{pad}{_json_value(x, indent + 1)}" for x in v)
        return "[\n" + items + "\n" + "  " * indent + "]"
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "null"
    if isinstance(v, float):
        return format_float(v)
    if isinstance(v, numbers.Integral):
        return str(int(v))
    return json.dumps(str(v))


def dump_json(obj, path: Path) -> None:
    path.write_text(_json_value(obj, 0) + "\n", encoding="utf-8")


def write_trajectory_csv(path: Path, s: Section, save_every: int) -> None:
    """Header t,i,x,eta,u; one row per saved (level, spatial index).

    u is the forward-difference particle velocity; the final level uses
    the backward difference since no later row exists.
    """
    g = s.grid
    last = g.n_time - 1
    levels = sorted(set(range(0, g.n_time, save_every)) | {last})
    lines = ["t,i,x,eta,u"]
    for j in levels:
        eta = s.row_y(j)
        if j < last:
            u = (s.row_y(j + 1) - eta) / g.k
        else:
            u = (eta - s.row_y(j - 1)) / g.k
        t = format_float(j * g.k)
        for i in range(g.n_space):
            lines.append(
                f"{t},{i},{format_float(i * g.h)},{format_float(eta[i])},{format_float(u[i])}"
            )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Shared run machinery.


def diagnostic_windows(n_rows: int) -> list[tuple[int, int]]:
    """Whole run, first half, second half (deduplicated, in that order)."""
    j_hi = n_rows - 1
    if j_hi < 1:
        return []
    mid = j_hi // 2
    windows = [(0, j_hi)]
    if 0 < mid < j_hi:
        windows += [(0, mid), (mid, j_hi)]
    out = []
    for w in windows:
        if w not in out:
            out.append(w)
    return out


def _momentum_series(s: Section):
    values = [gc.total_momentum(s, j) for j in range(s.grid.n_time - 1)]
    p0 = values[0]
    drift = max(abs(p - p0) for p in values)
    return values, p0, drift


def _step_records(result: EvolveResult, momenta) -> list[dict]:
    records = []
    for st in result.steps:
        records.append(
            {
                "step": st.step,
                "newton_iterations": st.iterations,
                "residual_inf_norm": st.residual_norm,
                "backtracks": st.backtracks,
                "total_momentum": momenta[st.step],
                "action_increment": row_action(result.section, st.step),
            }
        )
    return records


def _window_records(s: Section, cfg: RunConfig, rng) -> list[dict]:
    records = []
    want_mff = "mff" in cfg.diagnostics
    tangents = None
    if want_mff:
        n = s.grid.n_space
        v = gc.solve_first_variation(s, rng.standard_normal((2, n)), cfg.solver())
        w = gc.solve_first_variation(s, rng.standard_normal((2, n)), cfg.solver())
        tangents = (v, w)
    xi = gc.SymmetryGenerator(1.0)
    for j_lo, j_hi in diagnostic_windows(s.grid.n_time):
        region = classify_region(j_lo, j_hi, s.grid)
        rec: dict = {"j_lo": j_lo, "j_hi": j_hi}
        if "noether" in cfg.diagnostics:
            terms = gc.noether_boundary_terms(s, xi, region)
            rec["noether_boundary_sum"] = float(np.sum(terms))
            rec["noether_abs_sum"] = float(np.sum(np.abs(terms)))
        if want_mff:
            terms = gc.mff_boundary_terms(s, tangents[0], tangents[1], region)
            rec["mff_boundary_sum"] = float(np.sum(terms))
            rec["mff_abs_sum"] = float(np.sum(np.abs(terms)))
        records.append(rec)
    return records


def _bridges_summary(s: Section) -> dict | None:
    try:
        z, levels = bridges.phase_field(s)
        cons, _ = bridges.conservation_residual(z, s.grid, levels)
        ham, _ = bridges.hamilton_residuals(z, s.grid, levels)
        el, _ = bridges.continuous_el_residual(s)
    except OutOfRange:
        return None
    return {
        "conservation_residual_max": float(np.max(np.abs(cons))),
        "hamilton_residuals_max": float(np.max(np.abs(ham))),
        "continuous_el_residual_max": float(np.max(np.abs(el))),
    }


def _execute(cfg: RunConfig) -> EvolveResult:
    s0 = initialize(cfg.u0(), cfg.grid())
    return evolve(s0, cfg.n_steps, cfg.solver())


def run_command(cfg: RunConfig) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    try:
        result = _execute(cfg)
    except BadInitialData as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    s = result.section
    momenta, p0, drift = _momentum_series(s)
    report: dict = {
        "config": cfg.as_dict(),
        "steps": _step_records(result, momenta),
        "windows": [],
        "summary": {
            "status": "ok" if result.ok else "aborted",
            "n_rows": s.grid.n_time,
            "final_time": (s.grid.n_time - 1) * s.grid.k,
            "momentum_initial": p0,
            "momentum_drift_max": drift,
            "max_newton_iterations": max((st.iterations for st in result.steps), default=0),
            "max_residual_inf_norm": max((st.residual_norm for st in result.steps), default=0.0),
            "failure": None,
        },
    }
    if result.ok and s.grid.n_time >= 3 and ({"noether", "mff"} & set(cfg.diagnostics)):
        report["windows"] = _window_records(s, cfg, rng)
    if result.ok and "bridges" in cfg.diagnostics:
        report["summary"]["bridges"] = _bridges_summary(s)
    if not result.ok:
        report["summary"]["failure"] = {
            "step": result.failure.step,
            "error": result.failure.error,
            "message": result.failure.message,
        }
    write_trajectory_csv(out_dir / "trajectory.csv", s, cfg.save_every)
    dump_json(report, out_dir / "diagnostics.json")
    if not result.ok:
        print(
            f"solver abort at step {result.failure.step}: {result.failure.message}",
            file=sys.stderr,
        )
        return EXIT_SOLVER
    return EXIT_OK


# ---------------------------------------------------------------------------
# Refinement study.


def parse_levels(text: str) -> list[int]:
    try:
        levels = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"levels: {exc}") from exc
    if len(levels) < 3:
        raise ConfigError("levels: need at least 3 refinement factors")
    if any(f < 1 for f in levels):
        raise ConfigError("levels: factors must be positive integers")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigError("levels: factors must be strictly increasing")
    if any(b % a for a, b in zip(levels, levels[1:])):
        raise ConfigError("levels: each factor must divide the next")
    return levels


_EXACT_ERROR = 1e-10  # successive differences below this are roundoff


def converge_command(cfg: RunConfig, levels: list[int]) -> int:
    """Run the same physical problem at each refinement of the base grid
    and compare solutions at the shared final physical time."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    sections = []
    status = "ok"
    failure = None
    for f in levels:
        level_cfg = RunConfig(
            n_space=cfg.n_space * f,
            n_steps=cfg.n_steps * f,
            domain_length=cfg.domain_length,
            cfl=cfg.cfl,
            ic=cfg.ic,
            out_dir=cfg.out_dir,
            save_every=cfg.save_every,
            seed=cfg.seed,
            diagnostics=cfg.diagnostics,
            tol_residual=cfg.tol_residual,
            max_iters=cfg.max_iters,
            damping=cfg.damping,
            max_backtracks=cfg.max_backtracks,
        )
        try:
            result = _execute(level_cfg)
        except BadInitialData as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if not result.ok:
            status = "aborted"
            failure = {
                "factor": f,
                "step": result.failure.step,
                "error": result.failure.error,
                "message": result.failure.message,
            }
            break
        s = result.section
        sections.append((f, s))
        rows.append(
            {
                "factor": f,
                "n_space": level_cfg.n_space,
                "n_steps": level_cfg.n_steps,
                "h": s.grid.h,
                "k": s.grid.k,
                "bridges": _bridges_summary(s),
            }
        )
    # Compare restrictions at the shared physical time n_steps * k_base
    # (the final rows of different levels sit at different times).
    errors = []
    for (fa, sa), (fb, sb) in zip(sections, sections[1:]):
        ratio = fb // fa
        fine = sb.row_y(fb * cfg.n_steps)[::ratio]
        coarse = sa.row_y(fa * cfg.n_steps)
        errors.append(float(np.max(np.abs(fine - coarse))))
    orders = []
    for m, (ea, eb) in enumerate(zip(errors, errors[1:])):
        if ea < _EXACT_ERROR and eb < _EXACT_ERROR:
            orders.append("exact")
        else:
            # errors[m] and errors[m+1] are measured on grids refined by
            # the consecutive factor ratio.
            ratio = levels[m + 1] / levels[m]
            orders.append(math.log(ea / eb) / math.log(ratio))
    bridges_orders = {}
    for key in ("conservation_residual_max", "continuous_el_residual_max"):
        vals = [r["bridges"][key] if r["bridges"] else None for r in rows]
        seq = []
        for (va, vb), (ra, rb) in zip(zip(vals, vals[1:]), zip(rows, rows[1:])):
            if va is None or vb is None:
                seq.append(None)
            elif va < _EXACT_ERROR and vb < _EXACT_ERROR:
                seq.append("exact")
            else:
                seq.append(math.log(va / vb) / math.log(rb["factor"] / ra["factor"]))
        bridges_orders[key] = seq
    report = {
        "config": cfg.as_dict(),
        "levels": rows,
        "errors": errors,
        "orders": orders,
        "bridges_orders": bridges_orders,
        "status": status,
        "failure": failure,
    }
    dump_json(report, out_dir / "convergence.json")
    # Classic layout: each line carries the error against the previous
    # coarser level and the order estimated from successive errors.
    print(f"{'factor':>6} {'n_space':>8} {'n_steps':>8} {'error_vs_prev':>14} {'order':>8}")
    for idx, row in enumerate(rows):
        err = format(errors[idx - 1], ".6e") if 1 <= idx <= len(errors) else "-"
        if 2 <= idx <= len(orders) + 1:
            o = orders[idx - 2]
            order = o if isinstance(o, str) else format(o, ".3f")
        else:
            order = "-"
        print(f"{row['factor']:>6} {row['n_space']:>8} {row['n_steps']:>8} {err:>14} {order:>8}")
    if status != "ok":
        print(f"study aborted at factor {failure['factor']}: {failure['message']}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


# ---------------------------------------------------------------------------
# Check suite.


def _random_stencil(rng) -> Stencil:
    y1 = rng.uniform(-1.0, 1.0)
    y2 = y1 + rng.uniform(0.3, 2.5)
    y3 = y2 + rng.uniform(-1.0, 1.0)
    y4 = y1 + rng.uniform(-1.0, 1.0)
    return Stencil(y1, y2, y3, y4, 1.0, 1.0)


def _random_jet(rng) -> bridges.Jet3Sample:
    vals = rng.uniform(-2.0, 2.0, size=7)
    return bridges.Jet3Sample(
        eta=vals[0],
        eta_x=rng.uniform(0.3, 3.0),
        eta_t=vals[1],
        eta_xx=vals[2],
        eta_tx=vals[3],
        eta_tt=vals[4],
        eta_txx=vals[5],
    )


def _check(name: str, value: float, threshold: float) -> dict:
    status = "PASS" if value <= threshold else "FAIL"
    return {"name": name, "status": status, "value": value, "threshold": threshold}


def check_suite(cfg: RunConfig) -> tuple[list[dict], int]:
    """Identity and theorem checks on a fresh short trajectory.

    Identity checks hold for any admissible data; the boundary-sum
    checks hold only on solutions, so an injected off-shell perturbation
    makes them fail while the identities keep passing.
    """
    rng = np.random.default_rng(cfg.seed)
    result = _execute(cfg)
    if not result.ok:
        raise ChmsError(f"trajectory aborted: {result.failure.message}")
    s = result.section
    checks: list[dict] = []

    worst_omega = 0.0
    worst_momentum = 0.0
    worst_hess_row = 0.0
    for _ in range(1000):
        st = _random_stencil(rng)
        v = rng.standard_normal(4)
        w = rng.standard_normal(4)
        terms = [gc.omega_l(st, v, w, l) for l in (1, 2, 3, 4)]
        scale = sum(abs(t) for t in terms)
        if scale > 0.0:
            worst_omega = max(worst_omega, abs(sum(terms)) / scale)
        xi = gc.SymmetryGenerator(rng.uniform(-2.0, 2.0))
        jterms = [gc.momentum_map_l(st, xi, l) for l in (1, 2, 3, 4)]
        jscale = sum(abs(t) for t in jterms)
        if jscale > 0.0:
            worst_momentum = max(worst_momentum, abs(sum(jterms)) / jscale)
        m = hess_L(st).matrix
        rs = float(np.max(np.abs(m.sum(axis=1))) / max(np.max(np.abs(m)), 1e-300))
        worst_hess_row = max(worst_hess_row, rs)
    checks.append(_check("omega_closure_identity", worst_omega, 1e-12))
    checks.append(_check("momentum_closure_identity", worst_momentum, 1e-12))
    checks.append(_check("hessian_row_sum_zero", worst_hess_row, 1e-12))

    worst_ham = 0.0
    for _ in range(1000):
        jet = _random_jet(rng)
        z = bridges.legendre(jet)
        dens = 0.5 * (jet.eta_x * jet.eta_t**2 + jet.eta_tx**2 / jet.eta_x)
        lhs = (
            bridges.hamiltonian(jet)
            + z.px * jet.eta_x
            + z.pt * jet.eta_t
            + z.ptx * jet.eta_tx
        )
        scale = max(abs(dens), abs(z.px * jet.eta_x), abs(z.pt * jet.eta_t), 1.0)
        worst_ham = max(worst_ham, abs(lhs - dens) / scale)
    checks.append(_check("legendre_hamiltonian_identity", worst_ham, 8.0 * sys.float_info.epsilon))

    worst_skew = 0.0
    for _ in range(200):
        u = rng.standard_normal(6)
        v = rng.standard_normal(6)
        w1, w0 = bridges.omega_pair(u, v)
        s1, s0 = bridges.omega_pair(v, u)
        worst_skew = max(worst_skew, abs(w1 + s1), abs(w0 + s0))
    checks.append(_check("omega_pair_skew_exact", worst_skew, 0.0))
    entry_err = max(
        abs(bridges.omega_pair([1, 0, 0, 0, 0, 0], [0, 0, 0, 1, 0, 0])[0] + 1.0),
        abs(bridges.omega_pair([1, 0, 0, 0, 0, 0], [0, 0, 0, 0, 1, 0])[1] + 1.0),
    )
    checks.append(_check("presymplectic_matrix_entries", entry_err, 0.0))
    rank_err = abs(bridges.rank_by_elimination(bridges.B1) - 4) + abs(
        bridges.rank_by_elimination(bridges.B0) - 2
    )
    checks.append(_check("presymplectic_rank_degeneracy", float(rank_err), 0.0))

    # Theorem checks: optionally on an injected off-shell perturbation.
    # Tangent solutions are always computed along the true solution.
    v_t = gc.solve_first_variation(s, rng.standard_normal((2, s.grid.n_space)), cfg.solver())
    w_t = gc.solve_first_variation(s, rng.standard_normal((2, s.grid.n_space)), cfg.solver())
    target = s
    if cfg.inject_off_shell:
        bump = 0.03 * s.grid.h * rng.standard_normal(s.displacement.shape)
        target = Section(s.grid, s.displacement + bump)

    xi = gc.SymmetryGenerator(1.0)
    worst_noether = 0.0
    worst_mff = 0.0
    for j_lo, j_hi in diagnostic_windows(target.grid.n_time):
        region = classify_region(j_lo, j_hi, target.grid)
        terms = gc.noether_boundary_terms(target, xi, region)
        scale = float(np.sum(np.abs(terms)))
        total = abs(float(np.sum(terms)))
        worst_noether = max(worst_noether, total / scale if scale > 0.0 else (0.0 if total == 0.0 else math.inf))
        terms = gc.mff_boundary_terms(target, v_t, w_t, region)
        scale = float(np.sum(np.abs(terms)))
        total = abs(float(np.sum(terms)))
        worst_mff = max(worst_mff, total / scale if scale > 0.0 else (0.0 if total == 0.0 else math.inf))
    checks.append(_check("noether_boundary_sum_on_shell", worst_noether, 1e-9))
    checks.append(_check("mff_boundary_sum_on_shell", worst_mff, 1e-8))

    momenta = [gc.total_momentum(target, j) for j in range(target.grid.n_time - 1)]
    drift = max(abs(p - momenta[0]) for p in momenta)
    drift_scale = max(abs(momenta[0]), gc.total_momentum_scale(target, 0), 1e-300)
    checks.append(_check("total_momentum_drift", drift / drift_scale, 1e-9))

    info = _bridges_summary(target)
    if info is not None:
        for key, val in info.items():
            checks.append({"name": key, "status": "INFO", "value": val, "threshold": None})

    failed = any(c["status"] == "FAIL" for c in checks)
    return checks, (EXIT_CHECK if failed else EXIT_OK)


def check_command(cfg: RunConfig) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        checks, code = check_suite(cfg)
    except BadInitialData as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ChmsError as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    dump_json({"config": cfg.as_dict(), "checks": checks}, out_dir / "check.json")
    for c in checks:
        thr = "-" if c["threshold"] is None else format(c["threshold"], ".3e")
        print(f"{c['status']}: {c['name']} value={format(c['value'], '.3e')} threshold={thr}")
    return code


# ---------------------------------------------------------------------------
# Argument parsing.


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value configuration file")
    p.add_argument("--n-space", type=int, dest="n_space")
    p.add_argument("--n-steps", type=int, dest="n_steps")
    p.add_argument("--cfl", type=float)
    p.add_argument("--domain-length", type=float, dest="domain_length")
    p.add_argument("--ic", help="rest | uniform:c | cosine:a | gaussian_bump:a,w")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--save-every", type=int, dest="save_every")
    p.add_argument("--seed", type=int)
    p.add_argument("--diagnostics", help="comma list of noether,mff,bridges (or all/none)")
    p.add_argument("--tol-residual", type=float, dest="tol_residual")
    p.add_argument("--max-iters", type=int, dest="max_iters")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chms",
        description="Variational time integrator and conservation diagnostics "
        "for the shallow-water particle-label field on a circle.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run a simulation and write trajectory + diagnostics")
    _add_run_flags(run_p)
    conv_p = sub.add_parser("converge", help="refinement study at fixed cfl")
    _add_run_flags(conv_p)
    conv_p.add_argument("--levels", default="1,2,4", help="comma list of refinement factors")
    check_p = sub.add_parser("check", help="run the structure-check suite")
    _add_run_flags(check_p)
    check_p.add_argument(
        "--inject-off-shell",
        action="store_true",
        dest="inject_off_shell",
        help="perturb the trajectory so the theorem checks must fail",
    )
    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    file_values = parse_config_file(args.config) if args.config else None
    overrides = {
        "n_space": args.n_space,
        "n_steps": args.n_steps,
        "cfl": args.cfl,
        "domain_length": args.domain_length,
        "ic": args.ic,
        "out_dir": args.out_dir,
        "save_every": args.save_every,
        "seed": args.seed,
        "tol_residual": args.tol_residual,
        "max_iters": args.max_iters,
    }
    if args.diagnostics is not None:
        overrides["diagnostics"] = parse_diagnostics(args.diagnostics)
    if getattr(args, "inject_off_shell", False):
        overrides["inject_off_shell"] = True
    return build_run_config(file_values, overrides)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    try:
        cfg = _resolve_config(args)
        if args.command == "run":
            return run_command(cfg)
        if args.command == "converge":
            return converge_command(cfg, parse_levels(args.levels))
        return check_command(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def console_main() -> None:
    sys.exit(main())
