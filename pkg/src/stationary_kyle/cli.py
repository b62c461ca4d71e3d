"""Command-line harness: TOML experiment configs in, plain-text result tables out.

Five modes: solve (fixed-point propagator + diagnostics), markov (closed-form
bundle + observables), simulate (Monte Carlo ensemble), validate (solver vs
closed-form agreement table), sweep (observable surfaces over a timescale grid).
Outputs are deterministic for a fixed config and seed: no timestamps, floats at
17 significant digits, atomic writes.
"""

import argparse
import concurrent.futures
import contextlib
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .acf import AcfSpec
from .diagnostics import diagnostics_report
from .errors import ConfigError, KyleError
from .markov import (
    fit_two_exponential,
    markov_demand_kernels,
    markov_observables,
    markov_propagator,
    solve_markov_ansatz,
)
from .simulate import payoff_and_risk_stats, simulate_market
from .solver import solve_equilibrium, variogram_from_sigma

__all__ = ["ExperimentConfig", "parse_config", "run", "main"]

_MODES = ("solve", "markov", "simulate", "validate", "sweep")
_WORKERS_ENV = "STATIONARY_KYLE_WORKERS"


@dataclass
class ExperimentConfig:
    mode: str
    output_dir: str
    dividend_acf: AcfSpec | None = None
    nt_acf: AcfSpec | None = None
    T_cut: int = 500
    T_it: int = 200
    tol: float | None = None
    workers: int = 1
    sim: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)


def _acf_from_table(name, table):
    if not isinstance(table, dict):
        raise ConfigError(f"[{name}] must be a table with a 'family' key")
    spec = dict(table)
    family = spec.pop("family", None)
    builders = {
        "exponential": (AcfSpec.exponential, ("tau",)),
        "power_law": (AcfSpec.power_law, ("tau0", "gamma")),
        "damped_oscillation": (AcfSpec.damped_oscillation, ("tau1", "tau2")),
        "white": (AcfSpec.white, ()),
        "tabulated": (AcfSpec.tabulated, ("values",)),
    }
    if family not in builders:
        raise ConfigError(f"[{name}] unknown ACF family {family!r}; "
                          f"choose from {sorted(builders)}")
    builder, required = builders[family]
    missing = [k for k in required if k not in spec]
    if missing:
        raise ConfigError(f"[{name}] family {family!r} needs {missing}")
    kwargs = {k: spec.pop(k) for k in required}
    if "variance" in spec:
        kwargs["variance"] = spec.pop("variance")
    if spec:
        raise ConfigError(f"[{name}] unexpected keys {sorted(spec)}")
    return builder(**kwargs)


def _acf_repr(spec):
    if spec is None:
        return "none"
    parts = [f"family={spec.family}"]
    for key in ("tau", "tau0", "gamma", "tau1", "tau2"):
        val = getattr(spec, key)
        if val is not None:
            parts.append(f"{key}={_fmt(val)}")
    if spec.table is not None:
        parts.append(f"table_len={len(spec.table)}")
    parts.append(f"variance={_fmt(spec.variance)}")
    return " ".join(parts)


def parse_config(path):
    """Load and validate a TOML experiment config; returns ExperimentConfig."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return config_from_dict(raw)


def config_from_dict(raw):
    known = {"mode", "output_dir", "dividend_acf", "nt_acf", "T_cut", "T_it",
             "tol", "workers", "sim", "sweep"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")

    mode = raw.get("mode")
    if mode not in _MODES:
        raise ConfigError(f"mode must be one of {_MODES}, got {mode!r}")

    cfg = ExperimentConfig(mode=mode, output_dir=str(raw.get("output_dir", "out")))
    if "dividend_acf" in raw:
        cfg.dividend_acf = _acf_from_table("dividend_acf", raw["dividend_acf"])
    if "nt_acf" in raw:
        cfg.nt_acf = _acf_from_table("nt_acf", raw["nt_acf"])

    for key, cast in (("T_cut", int), ("T_it", int), ("workers", int)):
        if key in raw:
            val = cast(raw[key])
            if val < 1:
                raise ConfigError(f"{key} must be >= 1, got {val}")
            setattr(cfg, key, val)
    if "tol" in raw:
        cfg.tol = float(raw["tol"])
        if cfg.tol <= 0.0:
            raise ConfigError(f"tol must be positive, got {cfg.tol}")

    if mode in ("solve", "simulate") and (cfg.dividend_acf is None or cfg.nt_acf is None):
        raise ConfigError(f"mode {mode!r} requires [dividend_acf] and [nt_acf]")
    if mode == "markov":
        for name, spec in (("dividend_acf", cfg.dividend_acf), ("nt_acf", cfg.nt_acf)):
            if spec is None or spec.family != "exponential":
                raise ConfigError(f"mode 'markov' requires an exponential [{name}]")

    if mode == "simulate":
        sim = dict(raw.get("sim", {}))
        if "T" not in sim:
            raise ConfigError("mode 'simulate' requires [sim] with T")
        cfg.sim = {
            "T": int(sim.pop("T")),
            "burn_in": int(sim.pop("burn_in", 2 * cfg.T_cut)),
            "n_paths": int(sim.pop("n_paths", 1)),
            "base_seed": int(sim.pop("base_seed", 0)),
            "n_batches": int(sim.pop("n_batches", 50)),
        }
        if sim:
            raise ConfigError(f"[sim] unexpected keys {sorted(sim)}")
        if cfg.sim["T"] < 1 or cfg.sim["n_paths"] < 1:
            raise ConfigError("[sim] T and n_paths must be >= 1")

    if mode == "sweep":
        swp = dict(raw.get("sweep", {}))
        tau_mu = [float(t) for t in swp.pop("tau_mu", [])]
        tau_nt = [float(t) for t in swp.pop("tau_nt", [])]
        if swp:
            raise ConfigError(f"[sweep] unexpected keys {sorted(swp)}")
        if not tau_mu or not tau_nt:
            raise ConfigError("mode 'sweep' requires non-empty tau_mu and tau_nt grids")
        if min(tau_mu) <= 0.0 or min(tau_nt) <= 0.0:
            raise ConfigError("[sweep] timescales must be positive")
        cfg.sweep = {"tau_mu": tau_mu, "tau_nt": tau_nt}

    return cfg


def _fmt(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _header(cfg, extra=()):
    tol = _fmt(cfg.tol) if cfg.tol is not None else "1e-8*G0 (adaptive)"
    lines = [
        f"# stationary-kyle {__version__}",
        f"# mode={cfg.mode} output_dir={cfg.output_dir}",
        f"# dividend_acf: {_acf_repr(cfg.dividend_acf)}",
        f"# nt_acf: {_acf_repr(cfg.nt_acf)}",
        f"# T_cut={cfg.T_cut} T_it={cfg.T_it} tol={tol} workers={cfg.workers}",
    ]
    if cfg.sim:
        sim = " ".join(f"{k}={v}" for k, v in sorted(cfg.sim.items()))
        lines.append(f"# sim: {sim}")
    if cfg.sweep:
        lines.append(f"# sweep: tau_mu={cfg.sweep['tau_mu']} tau_nt={cfg.sweep['tau_nt']}")
    lines.extend(extra)
    return lines


def _write_table(path, cfg, columns, extra_header=()):
    """Columnar plain-text table: '#' header, one space-separated row per index."""
    names = list(columns)
    cols = [np.atleast_1d(np.asarray(columns[n])) for n in names]
    n_rows = len(cols[0])
    lines = _header(cfg, extra_header)
    lines.append("# columns: " + " ".join(names))
    for i in range(n_rows):
        lines.append(" ".join(_fmt(c[i]) for c in cols))
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_error(output_dir, exc):
    record = {
        "error": type(exc).__name__,
        "message": str(exc),
        "exit_code": exc.exit_code,
    }
    with contextlib.suppress(OSError):
        os.makedirs(output_dir, exist_ok=True)
        _atomic_write(os.path.join(output_dir, "error.json"),
                      json.dumps(record, indent=2) + "\n")


# ---------------------------------------------------------------------------
# mode implementations


def _run_solve(cfg, out):
    sol = solve_equilibrium(cfg.dividend_acf, cfg.nt_acf, cfg.T_cut, cfg.T_it, tol=cfg.tol)
    status = [f"# converged={_fmt(sol.converged)} iterations={sol.iterations_run}"]
    _write_table(
        os.path.join(out, "propagator.txt"), cfg,
        {
            "lag": np.arange(cfg.T_cut),
            "G": sol.G.values,
            "R": sol.kernels.R.values,
            "R_NT": sol.kernels.R_NT.values,
            "R_mu": sol.kernels.R_mu.values,
            "Omega": sol.Omega_row,
        },
        status,
    )
    _write_table(
        os.path.join(out, "price_acf.txt"), cfg,
        {
            "lag": np.arange(len(sol.Sigma)),
            "Sigma": sol.Sigma,
            "variogram": variogram_from_sigma(sol.Sigma),
        },
        status,
    )
    _write_table(
        os.path.join(out, "convergence.txt"), cfg,
        {
            "iteration": np.arange(1, len(sol.residual_history) + 1),
            "residual": sol.residual_history,
        },
        status,
    )
    L = min(50, cfg.T_cut - 1)
    rep = diagnostics_report(sol, cfg.dividend_acf, cfg.nt_acf, L=L)
    _write_table(
        os.path.join(out, "diagnostics.txt"), cfg,
        {
            "lag": np.arange(L + 1),
            "xi_model": rep.xi_model,
            "xi_it": rep.xi_it,
            "err_xi": rep.err_xi,
            "omega_model": rep.omega_model,
            "omega_nt": rep.omega_nt,
            "err_omega": rep.err_omega,
            "variogram": rep.variogram,
        },
        status + [f"# lag0_defect={_fmt(rep.lag0_defect)}"],
    )
    return 0


def _run_markov(cfg, out):
    eq = solve_markov_ansatz(cfg.dividend_acf.alpha, cfg.nt_acf.alpha,
                             cfg.dividend_acf.variance, cfg.nt_acf.variance)
    obs = markov_observables(eq)
    scalars = {
        "alpha_mu": eq.alpha_mu, "alpha_nt": eq.alpha_nt, "rho": eq.rho,
        "tau_rho": eq.tau_rho, "G0": eq.G0, "mode_weight": eq.mode_weight,
        "b_tilde": eq.b_tilde, "a": eq.a, "Omega0": eq.Omega0,
        "R_nt_scalar": eq.R_nt_scalar, "R_mu_scalar": eq.R_mu_scalar,
        "Gamma1": eq.Gamma1, "Gamma2": eq.Gamma2,
        "gamma1": eq.gamma1, "gamma2": eq.gamma2,
        **obs,
    }
    _write_table(
        os.path.join(out, "bundle.txt"), cfg,
        {"name": list(scalars), "value": [_fmt(v) for v in scalars.values()]},
    )
    kernels = markov_demand_kernels(eq, cfg.T_cut)
    _write_table(
        os.path.join(out, "propagator.txt"), cfg,
        {
            "lag": np.arange(cfg.T_cut),
            "G": markov_propagator(eq, cfg.T_cut).values,
            "R": kernels.R.values,
            "R_NT": kernels.R_NT.values,
            "R_mu": kernels.R_mu.values,
        },
    )
    return 0


def _simulate_one(args):
    G, kernels, Xi_mu, Omega_NT, T, burn_in, seed, n_batches = args
    path = simulate_market(G, kernels, Xi_mu, Omega_NT, T, burn_in, seed)
    stats = payoff_and_risk_stats(path, Xi_mu, n_batches=n_batches)
    return seed, stats


def _run_simulate(cfg, out):
    sol = solve_equilibrium(cfg.dividend_acf, cfg.nt_acf, cfg.T_cut, cfg.T_it, tol=cfg.tol)
    sim = cfg.sim
    jobs = [(sol.G, sol.kernels, cfg.dividend_acf, cfg.nt_acf, sim["T"],
             sim["burn_in"], sim["base_seed"] + i, sim["n_batches"])
            for i in range(sim["n_paths"])]
    if cfg.workers > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_simulate_one, jobs))
    else:
        results = [_simulate_one(j) for j in jobs]

    names = ("mm_drift", "it_gain", "nt_loss", "mm_risk", "mm_risk_wick",
             "risk_gap", "risk_gap_se", "balance_se")
    columns = {"seed": [r[0] for r in results]}
    for name in names:
        columns[name] = [r[1][name] for r in results]
    for name in ("mm_drift", "it_gain", "nt_loss", "mm_risk"):
        columns[name + "_se"] = [r[1]["standard_errors"][name] for r in results]
    columns["n_samples"] = [r[1]["n_samples"] for r in results]

    extra = []
    if len(results) > 1:
        for name in names[:4]:
            vals = np.array(columns[name], dtype=float)
            se = float(np.std(vals, ddof=1) / np.sqrt(len(vals)))
            extra.append(f"# ensemble {name}: mean={_fmt(vals.mean())} se={_fmt(se)}")
    _write_table(os.path.join(out, "ensemble.txt"), cfg, columns, extra)
    return 0


def _validate_rows(T_cut, T_it):
    """Solver vs closed-form agreement on the Markovian reference cases."""
    from .markov import closed_form_equal_timescales, closed_form_uncorrelated

    rows = []

    def check(case, measured, bound):
        rows.append((case, measured, bound, "PASS" if measured < bound else "FAIL"))

    for alpha in (0.3, 0.5, 0.8):
        ref = closed_form_uncorrelated(alpha, 1.0, 1.0, T_cut=T_cut)
        sol = solve_equilibrium(AcfSpec.exponential(-1.0 / np.log(alpha)),
                                AcfSpec.white(), T_cut, T_it)
        n = int(5 * (-1.0 / np.log(alpha))) + 1
        err = np.max(np.abs(sol.G.values[:n] - ref.values[:n]) / np.abs(ref.values[:n]))
        check(f"uncorrelated_alpha={alpha}", float(err), 1e-5)

    for alpha in (0.3, 0.6, 0.9):
        eq = closed_form_equal_timescales(alpha, 1.0, 1.0)
        tau = -1.0 / np.log(alpha)
        sol = solve_equilibrium(AcfSpec.exponential(tau), AcfSpec.exponential(tau),
                                T_cut, T_it)
        ref = markov_propagator(eq, T_cut)
        # The equal-timescale propagator decays at the endogenous rate rho, so
        # five of ITS e-folds is the window where a relative comparison means
        # anything; past that the reference is below the solver's resolution.
        n = int(5 * eq.tau_rho) + 1
        err = np.max(np.abs(sol.G.values[:n] - ref.values[:n]) / np.abs(ref.values[:n]))
        check(f"equal_timescales_alpha={alpha}", float(err), 1e-5)

    tau_mu, tau_nt = 20.0, 10.0
    eq = solve_markov_ansatz(np.exp(-1.0 / tau_mu), np.exp(-1.0 / tau_nt), 1.0, 1.0)
    sol = solve_equilibrium(AcfSpec.exponential(tau_mu), AcfSpec.exponential(tau_nt),
                            T_cut, T_it)
    fit = fit_two_exponential(sol.G, np.exp(-1.0 / tau_mu))
    check("general_rho_fit_tau=(20,10)", abs(fit["rho"] - eq.rho), 1e-3)
    return rows


def _run_validate(cfg, out):
    rows = _validate_rows(cfg.T_cut, cfg.T_it)
    _write_table(
        os.path.join(out, "validation.txt"), cfg,
        {
            "case": [r[0] for r in rows],
            "measured": [_fmt(r[1]) for r in rows],
            "bound": [_fmt(r[2]) for r in rows],
            "status": [r[3] for r in rows],
        },
    )
    return 0


def _sweep_point(args):
    tau_mu, tau_nt = args
    eq = solve_markov_ansatz(float(np.exp(-1.0 / tau_mu)), float(np.exp(-1.0 / tau_nt)),
                             1.0, 1.0)
    obs = markov_observables(eq)
    return (tau_mu, tau_nt, eq.rho, eq.tau_rho, eq.b_tilde, eq.Omega0, eq.a, eq.G0,
            obs["sigma_ratio"], obs["nt_loss_per_trade"], obs["mm_risk_per_trade"],
            obs["it_nt_cov_ratio"], obs["it_mu_cov"])


def _run_sweep(cfg, out):
    pairs = [(tm, tn) for tm in cfg.sweep["tau_mu"] for tn in cfg.sweep["tau_nt"]]
    if cfg.workers > 1 and len(pairs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_sweep_point, pairs))
    else:
        rows = [_sweep_point(p) for p in pairs]
    names = ("tau_mu", "tau_nt", "rho", "tau_rho", "b_tilde", "Omega0", "a", "G0",
             "sigma_ratio", "nt_loss_per_trade", "mm_risk_per_trade",
             "it_nt_cov_ratio", "it_mu_cov")
    _write_table(os.path.join(out, "surface.txt"), cfg,
                 {n: [r[i] for r in rows] for i, n in enumerate(names)})
    return 0


_RUNNERS = {
    "solve": _run_solve,
    "markov": _run_markov,
    "simulate": _run_simulate,
    "validate": _run_validate,
    "sweep": _run_sweep,
}


def run(cfg):
    """Execute one experiment; returns the process exit status."""
    out = cfg.output_dir
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output_dir {out}: {exc}") from exc
    return _RUNNERS[cfg.mode](cfg, out)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="stationary-kyle",
        description="Stationary Kyle-market equilibrium: solve, closed forms, "
                    "simulation, validation, parameter sweeps.",
    )
    parser.add_argument("--config", required=True, help="path to a TOML experiment config")
    parser.add_argument("--mode", choices=_MODES, help="override the config mode")
    parser.add_argument("--workers", type=int, help="worker processes for sweep/ensemble")
    parser.add_argument("--seed", type=int, help="override [sim] base_seed")
    parser.add_argument("--output-dir", help="override the config output_dir")
    args = parser.parse_args(argv)

    output_dir = None
    try:
        raw_workers = os.environ.get(_WORKERS_ENV)
        try:
            with open(args.config, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config {args.config}: {exc}") from exc
        if args.mode:
            raw["mode"] = args.mode
        if args.output_dir:
            raw["output_dir"] = args.output_dir
        output_dir = str(raw.get("output_dir", "out"))
        if raw_workers is not None:
            try:
                raw["workers"] = int(raw_workers)
            except ValueError:
                raise ConfigError(f"{_WORKERS_ENV} must be an integer, "
                                  f"got {raw_workers!r}") from None
        if args.workers is not None:
            raw["workers"] = args.workers
        if args.seed is not None:
            raw.setdefault("sim", {})["base_seed"] = args.seed
        cfg = config_from_dict(raw)
        output_dir = cfg.output_dir
        return run(cfg)
    except KyleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        _write_error(output_dir or (args.output_dir or "out"), exc)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
