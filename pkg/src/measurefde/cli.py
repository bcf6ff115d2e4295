"""Command-line front end: integrate, mfde, avg and es subcommands.

Configuration uses flat key = value files with [subcommand] section headers
and # comments; explicit command-line flags override file values, which
override built-in defaults.  Every run writes a summary that is itself a
valid config file, so feeding a summary back with --config reproduces the
run bit for bit.  Exit codes: 0 success, 1 numerical failure (partial
outputs flushed), 2 usage error (nothing written).
"""

from __future__ import annotations

import argparse
import configparser
import io
import sys
from dataclasses import dataclass, field

import numpy as np

from . import averaging, esc, mfde, stieltjes
from .stieltjes import Integrator, QuadConfig

# expressions usable for --f and --density (densities must be nonnegative)
EXPRESSIONS = {
    "zero": lambda s: 0.0 * np.asarray(s, dtype=float),
    "one": lambda s: np.ones_like(np.asarray(s, dtype=float)),
    "t": lambda s: np.asarray(s, dtype=float),
    "t2": lambda s: np.asarray(s, dtype=float) ** 2,
    "exp": lambda s: np.exp(np.asarray(s, dtype=float)),
    "cos2": lambda s: np.cos(np.asarray(s, dtype=float)) ** 2,
    "sin": lambda s: np.sin(np.asarray(s, dtype=float)),
}

DEFAULTS = {
    "integrate": {"f": "one", "density": "one", "jumps": "", "from": 0.0,
                  "to": 1.0, "mesh": 0.01, "tol": 1e-9, "levels": 6},
    "mfde": {"example": "tanh", "t0": 0.0, "sigma": 2.0, "step": 2e-3,
             "tol": 1e-9, "jumps": "", "out": "mfde_run"},
    "avg": {"case": "linear", "eps": "0.2,0.1,0.05,0.025", "L": 1.0,
            "a0": 1.0, "b0": 1.0, "phi0": 1.0, "eps0": 0.2, "out": "avg_run"},
    "es": {"preset": "", "k": 0.2, "c": 2.0, "a": 0.2, "omega": 8.0,
           "theta_star": 8.0, "y_star": 64.0, "hessian": -1.0,
           "delay": "sin5sq", "predictor": "on", "dt": 1e-3, "t_end": 200.0,
           "pde_grid": 21, "theta_hat0": 0.0, "washout": 1.0,
           "tail_start": -1.0, "out": "es_run"},
}
_COMMON = {"seed": 0}


@dataclass
class RunConfig:
    subcommand: str
    params: dict = field(default_factory=dict)
    out: str = ""
    seed: int = 0
    explicit: frozenset = frozenset()   # keys set on the CLI or in a config file


class UsageError(ValueError):
    pass


def _parse_jumps(text: str):
    if not text:
        return ()
    out = []
    for part in text.split(","):
        try:
            t, m = part.split(":")
            out.append((float(t), float(m)))
        except ValueError as exc:
            raise UsageError(f"bad jump entry {part!r}, want t:magnitude") from exc
    return tuple(out)


def _parse_eps(text: str) -> list[float]:
    try:
        vals = [float(x) for x in str(text).split(",") if x != ""]
    except ValueError as exc:
        raise UsageError(f"bad eps list {text!r}") from exc
    if not vals:
        raise UsageError("empty eps list")
    return vals


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="measurefde",
        description="Stieltjes integration, delay equation solving, periodic "
                    "averaging checks and extremum-seeking simulation")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    p_int = sub.add_parser("integrate", help="Stieltjes integral with oracle ladder")
    p_int.add_argument("--f", dest="f", help="integrand expression id")
    p_int.add_argument("--density", help="integrator density expression id")
    p_int.add_argument("--jumps", help="jump list t1:m1,t2:m2,...")
    p_int.add_argument("--from", dest="from")
    p_int.add_argument("--to", dest="to")
    p_int.add_argument("--mesh")
    p_int.add_argument("--tol")
    p_int.add_argument("--levels")

    p_m = sub.add_parser("mfde", help="solve the delay integral equation")
    p_m.add_argument("--example", choices=["tanh"])
    p_m.add_argument("--t0")
    p_m.add_argument("--sigma")
    p_m.add_argument("--step")
    p_m.add_argument("--tol")
    p_m.add_argument("--jumps", help="impulse list t1:m1,t2:m2,...")
    p_m.add_argument("--out")

    p_a = sub.add_parser("avg", help="periodic averaging comparison")
    p_a.add_argument("--case", help="linear | sine | config:<file>")
    p_a.add_argument("--eps", help="comma separated epsilon list")
    p_a.add_argument("--L")
    p_a.add_argument("--a0")
    p_a.add_argument("--b0")
    p_a.add_argument("--phi0")
    p_a.add_argument("--eps0")
    p_a.add_argument("--out")

    p_e = sub.add_parser("es", help="extremum-seeking simulation")
    p_e.add_argument("--preset", choices=["table1"])
    p_e.add_argument("--k")
    p_e.add_argument("--c")
    p_e.add_argument("--a")
    p_e.add_argument("--omega")
    p_e.add_argument("--theta-star", dest="theta_star")
    p_e.add_argument("--y-star", dest="y_star")
    p_e.add_argument("--hessian")
    p_e.add_argument("--delay", help="sin5sq | const:<d>")
    p_e.add_argument("--predictor", choices=["on", "off"])
    p_e.add_argument("--dt")
    p_e.add_argument("--t-end", dest="t_end")
    p_e.add_argument("--pde-grid", dest="pde_grid")
    p_e.add_argument("--theta-hat0", dest="theta_hat0")
    p_e.add_argument("--washout")
    p_e.add_argument("--tail-start", dest="tail_start")
    p_e.add_argument("--out")

    for p in (p_int, p_m, p_a, p_e):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed")
    return ap


def _load_config_file(path: str, subcommand: str) -> dict:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str  # keys are case sensitive (L vs l)
    read = cp.read(path)
    if not read:
        raise UsageError(f"cannot read config file {path!r}")
    if not cp.has_section(subcommand):
        raise UsageError(f"config file {path!r} has no [{subcommand}] section")
    known = set(DEFAULTS[subcommand]) | set(_COMMON)
    out = {}
    for key, value in cp.items(subcommand):
        if key not in known:
            raise UsageError(f"unknown config key {key!r} for [{subcommand}]")
        out[key] = value
    return out


def parse_args(argv) -> RunConfig:
    """Resolve CLI flags over config-file values over defaults."""
    ap = _build_parser()
    ns = ap.parse_args(argv)
    subcommand = ns.subcommand
    cli_vals = {k: v for k, v in vars(ns).items()
                if k not in ("subcommand", "config") and v is not None}
    merged = dict(DEFAULTS[subcommand])
    merged.update(_COMMON)
    explicit = set(cli_vals)
    if ns.config:
        file_vals = _load_config_file(ns.config, subcommand)
        merged.update(file_vals)
        explicit |= set(file_vals)
    merged.update(cli_vals)
    # normalize numeric fields to their default types
    for key, default in {**DEFAULTS[subcommand], **_COMMON}.items():
        if isinstance(default, (int, float)) and not isinstance(default, bool):
            try:
                val = float(merged[key])
            except (TypeError, ValueError) as exc:
                raise UsageError(f"bad numeric value for {key!r}: "
                                 f"{merged[key]!r}") from exc
            merged[key] = int(val) if isinstance(default, int) \
                and float(val).is_integer() else val
    seed = int(merged.pop("seed", 0))
    out = str(merged.pop("out", "")) if "out" in merged else ""
    return RunConfig(subcommand=subcommand, params=merged, out=out, seed=seed,
                     explicit=frozenset(explicit - {"seed", "out"}))


def _summary_text(cfg: RunConfig, results: dict) -> str:
    """Round-trippable summary: a config section plus result comments."""
    buf = io.StringIO()
    buf.write(f"[{cfg.subcommand}]\n")
    for key, value in sorted(cfg.params.items()):
        buf.write(f"{key} = {value}\n")
    if cfg.out:
        buf.write(f"out = {cfg.out}\n")
    buf.write(f"seed = {cfg.seed}\n")
    for key, value in results.items():
        buf.write(f"# {key} = {value}\n")
    return buf.getvalue()


def _write_csv(path: str, header: str, columns) -> None:
    arr = np.column_stack(columns)
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in arr:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


# -- subcommand runners --------------------------------------------------------


def _run_integrate(cfg: RunConfig) -> int:
    prm = cfg.params
    for key in ("f", "density"):
        if prm[key] not in EXPRESSIONS:
            raise UsageError(f"unknown expression {prm[key]!r}; "
                             f"choose from {sorted(EXPRESSIONS)}")
    f = EXPRESSIONS[prm["f"]]
    g = Integrator(density=EXPRESSIONS[prm["density"]],
                   jumps=_parse_jumps(prm["jumps"]))
    a, b = float(prm["from"]), float(prm["to"])
    qc = QuadConfig(base_mesh=float(prm["mesh"]),
                    refinement_levels=int(prm["levels"]),
                    abs_tol=float(prm["tol"]))
    scalar_f = lambda s: float(np.asarray(f(s)))
    value = float(stieltjes.integrate(scalar_f, g, a, b, qc)[0])
    ladder = stieltjes.refine_ladder(scalar_f, g, a, b, int(prm["levels"]))
    print(f"value,{value:.17g}")
    print("level,approximation,abs_delta")
    for lvl, approx in enumerate(ladder):
        av = float(np.asarray(approx)[0])
        print(f"{lvl},{av:.17g},{abs(av - value):.17g}")
    return 0


def _run_mfde(cfg: RunConfig) -> int:
    prm = cfg.params
    if prm["example"] != "tanh":
        raise UsageError(f"unknown example {prm['example']!r}")
    problem = mfde.tanh_kernel_problem(sigma=float(prm["sigma"]),
                                       t0=float(prm["t0"]),
                                       tol=float(prm["tol"]),
                                       jumps=_parse_jumps(str(prm["jumps"])))
    traj, iters, delta = mfde.solve_picard(problem, step=float(prm["step"]))
    defect = mfde.residual(traj, problem)
    _write_csv(f"{cfg.out}_trajectory.csv", "t,value_0,post_jump_value_0",
               (traj.mesh, traj.values[:, 0], traj.post_jump_values[:, 0]))
    results = {"iterations": iters, "final_delta": f"{delta:.3e}",
               "residual": f"{defect:.3e}", "points": len(traj.mesh)}
    with open(f"{cfg.out}_summary.txt", "w", newline="\n") as fh:
        fh.write(_summary_text(cfg, results))
    print(f"mfde: residual {defect:.3e} after {iters} iterations "
          f"({len(traj.mesh)} mesh points) -> {cfg.out}_trajectory.csv")
    return 0


def _avg_problem(cfg: RunConfig) -> averaging.AvgProblem:
    prm = cfg.params
    case = str(prm["case"])
    if case.startswith("config:"):
        extra = _load_config_file(case.split(":", 1)[1], "avg")
        merged = {**prm, **extra}
        case = str(merged.get("case", "linear"))
        prm = merged
    if case == "linear":
        return averaging.linear_periodic_problem(
            a0=float(prm["a0"]), b0=float(prm["b0"]), phi_c=float(prm["phi0"]),
            L=float(prm["L"]), eps0=float(prm["eps0"]))
    if case == "sine":
        return averaging.sine_problem(phi_c=float(prm["phi0"]),
                                      L=float(prm["L"]), eps0=float(prm["eps0"]))
    raise UsageError(f"unknown avg case {case!r}")


def _run_avg(cfg: RunConfig) -> int:
    problem = _avg_problem(cfg)
    eps_list = _parse_eps(cfg.params["eps"])
    bad = [e for e in eps_list if not 0.0 < e <= problem.eps0]
    if bad:
        raise UsageError(f"eps values outside (0, {problem.eps0}]: {bad}")
    report = averaging.compare(problem, eps_list)
    rows = list(report.rows())
    _write_csv(f"{cfg.out}_report.csv", "eps,sup_error,J_times_eps,pass,slope",
               ([r[0] for r in rows], [r[1] for r in rows],
                [r[2] for r in rows], [float(r[3]) for r in rows],
                [r[4] for r in rows]))
    results = {"slope": report.slope, "J": report.theoretical_J,
               "all_passed": report.all_passed,
               "failures": report.failures or "none"}
    with open(f"{cfg.out}_summary.txt", "w", newline="\n") as fh:
        fh.write(_summary_text(cfg, results))
    print(f"avg: slope {report.slope:.3f}, J {report.theoretical_J:.3g}, "
          f"{'all pass' if report.all_passed else 'FAILURES'} "
          f"-> {cfg.out}_report.csv")
    return 0 if not report.failures else 1


def _es_params(cfg: RunConfig) -> esc.EsParams:
    prm = cfg.params
    delay_id = str(prm["delay"])
    if delay_id == "sin5sq":
        delay_fn, delay_grad = esc.sin5sq_delay, esc.sin5sq_delay_grad
    elif delay_id.startswith("const:"):
        d0 = float(delay_id.split(":", 1)[1])
        if d0 < 0:
            raise UsageError("constant delay must be nonnegative")
        delay_fn = esc.constant_delay(d0)
        delay_grad = lambda th: 0.0 * np.asarray(th, dtype=float)
    else:
        raise UsageError(f"unknown delay {delay_id!r}")
    key_map = {"k": "k_gain", "c": "c", "a": "a", "omega": "omega",
               "theta_star": "theta_star", "y_star": "y_star",
               "hessian": "hessian", "theta_hat0": "theta_hat0", "dt": "dt",
               "t_end": "t_end", "washout": "washout"}
    kw = {field: float(prm[flag]) for flag, field in key_map.items()}
    kw.update(delay_fn=delay_fn, delay_grad=delay_grad,
              predictor_on=str(prm["predictor"]) == "on")
    try:
        if str(prm["preset"]) == "table1":
            # preset supplies the stock block; explicitly set keys override it
            overrides = {key_map[f]: kw[key_map[f]] for f in key_map
                         if f in cfg.explicit}
            overrides["predictor_on"] = kw["predictor_on"]
            if delay_id != DEFAULTS["es"]["delay"]:
                overrides.update(delay_fn=delay_fn, delay_grad=delay_grad)
            return esc.table1_params(**overrides)
        return esc.EsParams(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _run_es(cfg: RunConfig) -> int:
    params = _es_params(cfg)
    # pin the resolved values into the summary so feeding it back as a
    # config reproduces this run exactly, preset or not
    cfg.params.update(k=params.k_gain, c=params.c, a=params.a,
                      omega=params.omega, theta_star=params.theta_star,
                      y_star=params.y_star, hessian=params.hessian,
                      theta_hat0=params.theta_hat0, dt=params.dt,
                      t_end=params.t_end, washout=params.washout,
                      predictor="on" if params.predictor_on else "off")
    code = 0
    try:
        trace = esc.simulate(params)
        note = ""
    except esc.FeasibilityError as err:
        trace = err.trace
        note = str(err)
        code = 1
    _write_es_outputs(cfg, params, trace, note)
    return code


def _write_es_outputs(cfg: RunConfig, params: esc.EsParams,
                      trace: esc.EsTrace, note: str) -> None:
    _write_csv(f"{cfg.out}_trace.csv",
               "t,theta,theta_hat,y,G,H_hat,U,Gamma,phi,sigma,feas_margin",
               (trace.times, trace.theta, trace.theta_hat, trace.y, trace.G,
                trace.H_hat, trace.U, trace.Gamma, trace.phi_t, trace.sigma_t,
                trace.feas_margin))
    n_x = int(cfg.params["pde_grid"])
    if n_x > 0 and len(trace.times) > 1:
        diag = esc.transport_diagnostic(params, trace, n_x=n_x)
        t_rep = np.repeat(diag.times, len(diag.x_grid))
        x_rep = np.tile(diag.x_grid, len(diag.times))
        _write_csv(f"{cfg.out}_pde.csv", "t,x,alpha",
                   (t_rep, x_rep, diag.alpha.reshape(-1)))
    results: dict = {"status": "feasibility-abort" if note else "completed"}
    if note:
        results["error"] = note
    tail_start = float(cfg.params["tail_start"])
    if tail_start < 0:
        tail_start = 0.75 * params.t_end
    if len(trace.times) and trace.times[-1] > tail_start:
        m = esc.tail_metrics(trace, tail_start)
        results.update(
            tail_start=tail_start,
            theta_err=f"{m['theta_err']:.6g}", y_err=f"{m['y_err']:.6g}",
            u_abs=f"{m['u_abs']:.6g}",
            converged=m["theta_err"] <= params.a + 1.0 / params.omega + 0.05)
        results["min_feas_margin"] = f"{float(np.min(trace.feas_margin)):.6g}"
    results.update(trace.flags)
    with open(f"{cfg.out}_summary.txt", "w", newline="\n") as fh:
        fh.write(_summary_text(cfg, results))
    bits = [f"es: {results['status']}"]
    if "theta_err" in results:
        bits.append(f"tail |theta-theta*|={results['theta_err']}"
                    f" y_err={results['y_err']} (converged={results['converged']})")
    print(", ".join(bits) + f" -> {cfg.out}_trace.csv")


RUNNERS = {"integrate": _run_integrate, "mfde": _run_mfde,
           "avg": _run_avg, "es": _run_es}


def run(cfg: RunConfig) -> int:
    """Execute a resolved config; numeric failures map to exit code 1."""
    try:
        return RUNNERS[cfg.subcommand](cfg)
    except UsageError:
        raise
    except (mfde.ConvergenceError, mfde.HypothesisViolationError,
            averaging.AvgConditionError, esc.AssumptionViolationError,
            stieltjes.IntegrandError, stieltjes.IntegratorDomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    try:
        cfg = parse_args(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return run(cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
