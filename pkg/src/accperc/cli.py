"""Command-line interface: ``accperc <group> <operation> [flags]``.

Groups are ``exact``, ``simulate``, ``gfsolve`` and ``experiment``.  Every
flag can also be given in a flat ``key = value`` config file (``--config``;
``#`` starts a comment); keys are the flag names without the leading dashes
(``n-min`` or ``n_min``).  Flags given on the command line win over the file;
unknown keys are errors.

The fully resolved configuration (including the seed, which is drawn from
OS entropy when not given) is printed to standard error as ``# key = value``
lines; results go to standard output.  Exit status: 0 success, 1 usage or
domain error, 2 numerical-precision failure under ``--strict``.
"""

from __future__ import annotations

import argparse
import math
import os
import secrets
import sys
import warnings
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from . import exact, experiments, gfsolve, simulate
from .numerics import DomainError

__all__ = ["OUTPUT_DIR_ENV", "UsageError", "build_parser", "parse_and_dispatch", "main", "load_config"]

#: Environment variable naming the default output directory.
OUTPUT_DIR_ENV = "ACCPERC_OUTPUT_DIR"

_NO_DEFAULT = object()


class UsageError(Exception):
    """Bad command-line or config-file input (exit status 1)."""


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting with status 2."""

    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage().rstrip()}")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.15g" % float(v)
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def _float_list(text: str) -> List[float]:
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> List[int]:
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _threads(text: str):
    if str(text) == "auto":
        return "auto"
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"threads must be a positive integer or 'auto', got {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("threads must be positive")
    return n


def _seed(text: str) -> int:
    try:
        s = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= s < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64)")
    return s


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


# ---------------------------------------------------------------------------
# parser construction
# ---------------------------------------------------------------------------


class _Leaf:
    """Book-keeping for one ``group operation`` parser: its option defaults
    and converters, used to merge a config file under the flags."""

    def __init__(self, parser, handler, stochastic=False):
        self.parser = parser
        self.handler = handler
        self.stochastic = stochastic
        self.defaults: Dict[str, object] = {}
        self.types: Dict[str, object] = {}

    def add(self, flag, *, type=float, default=_NO_DEFAULT, help="", **kw):
        dest = flag.lstrip("-").replace("-", "_")
        if kw.get("action") == "store_true":
            self.parser.add_argument(flag, dest=dest, default=None, help=help, **kw)
            self.types[dest] = _bool
            self.defaults[dest] = False
            return
        required = default is _NO_DEFAULT
        shown = "required" if required else f"default: {_fmt(default)}"
        self.parser.add_argument(flag, dest=dest, type=type, default=None, help=f"{help} ({shown})", **kw)
        self.types[dest] = type
        self.defaults[dest] = default


def _common(leaf: _Leaf):
    p = leaf.parser
    p.add_argument("--config", default=None, help="flat key=value config file; flags win over it")
    p.add_argument("--strict", action="store_true", default=None,
                   help="exit with status 2 if any grid-doubling precision check fails")
    leaf.types["strict"] = _bool
    leaf.defaults["strict"] = False
    leaf.add("--threads", type=_threads, default="auto",
             help="worker threads, a positive integer or 'auto'; results do not depend on it")
    leaf.add("--output-dir", type=str, default=None,
             help=f"directory for CSV/manifest/SVG files (default from ${OUTPUT_DIR_ENV}, else ./accperc-output)")
    if leaf.stochastic:
        leaf.add("--seed", type=_seed, default=None, help="64-bit run seed; drawn from OS entropy and printed when omitted")


def build_parser():
    """Return ``(root_parser, leaves)`` where ``leaves[(group, op)]`` is a :class:`_Leaf`."""
    root = _Parser(
        prog="accperc",
        description="Accessibility percolation on N-ary trees: exact formulas, simulation, "
        "generating-function solvers and reproducible experiments.",
    )
    root.add_argument("--version", action="version", version=f"accperc {__version__}")
    groups = root.add_subparsers(dest="group", metavar="{exact,simulate,gfsolve,experiment}", parser_class=_Parser)
    groups.required = True
    leaves = {}

    def leaf(group_sub, group, op, handler, help, stochastic=False):
        p = group_sub.add_parser(op, help=help, description=help)
        lf = _Leaf(p, handler, stochastic)
        leaves[(group, op)] = lf
        return lf

    # --- exact ---------------------------------------------------------------
    g = groups.add_parser("exact", help="closed-form probabilities and moments")
    gs = g.add_subparsers(dest="op", metavar="OPERATION", parser_class=_Parser)
    gs.required = True

    lf = leaf(gs, "exact", "phi", _exact_phi, "phi(k, J): probability that k increasing uniforms satisfy U_j >= j/J")
    lf.add("--k", type=int, help="k, number of path steps")
    lf.add("--j", type=int, help="J, sample size (J > k)")
    lf = leaf(gs, "exact", "psi", _exact_psi, "psi(k, J, eps): probability that k increasing uniforms satisfy U_j >= eps + (1-eps)(j-1)/J")
    lf.add("--k", type=int, help="k, number of path steps")
    lf.add("--j", type=int, help="J, corridor resolution (J >= k)")
    lf.add("--eps", type=float, default=0.0, help="epsilon, corridor tilt in [0, 1)")
    lf = leaf(gs, "exact", "theta", _exact_theta, "theta(alpha) = alpha (1 - log alpha), the exponential growth rate")
    lf.add("--alpha", type=float, help="alpha > 0, generations per unit N (k = alpha N)")
    lf = leaf(gs, "exact", "moments", _exact_moments, "mean and second moment of Z_{N,k} from root fitness x")
    lf.add("--n", type=int, help="N, tree arity")
    lf.add("--k", type=int, help="k, generation")
    lf.add("--x", type=float, default=0.0, help="x = lambda/N, root fitness in [0, 1)")
    lf = leaf(gs, "exact", "prob-a", _exact_prob_a, "P[A_L(K)] exactly and its explicit upper bound")
    lf.add("--l", type=int, help="L, event level (0 <= L < K)")
    lf.add("--k", type=int, help="K, path length setting the corridor")
    lf = leaf(gs, "exact", "second-moment-bound", _exact_pz, "tilted second-moment (Paley-Zygmund) lower bound on survival")
    lf.add("--n", type=int, help="N, tree arity")
    lf.add("--k", type=int, help="k, generation")
    lf.add("--eps", type=float, default=0.0, help="epsilon, corridor tilt in [0, 1)")

    # --- simulate ------------------------------------------------------------
    g = groups.add_parser("simulate", help="Monte Carlo simulation of the accessible population")
    gs = g.add_subparsers(dest="op", metavar="OPERATION", parser_class=_Parser)
    gs.required = True

    def branching_flags(lf, replicates):
        lf.add("--n", type=int, help="N, tree arity")
        lf.add("--k", type=int, help="k, target generation")
        lf.add("--x", type=float, default=0.0, help="x = lambda/N, root fitness in [0, 1]")
        lf.add("--a", type=float, default=0.0, help="lower end of the fitness window (a, b]")
        lf.add("--b", type=float, default=1.0, help="upper end of the fitness window (a, b]")
        lf.add("--eps", type=float, default=None,
               help="epsilon: restrict to the tilted corridor eps + (1-eps)(t-1)/k; omit for none")
        lf.add("--population-cap", type=int, default=simulate.DEFAULT_POPULATION_CAP, help="largest generation expanded")
        lf.add("--replicates", type=int, default=replicates, help="independent replicates")
        _common(lf)

    lf = leaf(gs, "simulate", "survival", _sim_survival, "estimate P_x(Z_{N,k} >= 1) with a 95% interval", stochastic=True)
    branching_flags(lf, 10000)
    lf = leaf(gs, "simulate", "population", _sim_population, "moments of Z_{N,k} over replicates", stochastic=True)
    branching_flags(lf, 10000)
    lf = leaf(gs, "simulate", "brute-force", _sim_brute, "Z_{N,k} from the explicit labelled tree (N^k <= 4096)", stochastic=True)
    lf.add("--n", type=int, help="N, tree arity")
    lf.add("--k", type=int, help="k, generation")
    lf.add("--x", type=float, default=0.0, help="x = lambda/N, root fitness in [0, 1]")
    lf.add("--replicates", type=int, default=10000, help="independent replicates")
    _common(lf)

    # --- gfsolve -------------------------------------------------------------
    g = groups.add_parser("gfsolve", help="generating-function recursions")
    gs = g.add_subparsers(dest="op", metavar="OPERATION", parser_class=_Parser)
    gs.required = True

    lf = leaf(gs, "gfsolve", "survival", _gf_survival, "P_0(Z_{N,k} >= 1) from the survival-complement recursion")
    lf.add("--n", type=int, help="N, tree arity")
    lf.add("--k", type=int, default=None, help="k, generation (or give --alpha)")
    lf.add("--m", type=int, default=None, help="grid intervals M (default max(4096, 32 N))")
    lf.add("--alpha", type=float, default=None, help="alpha: set k = floor(alpha N) instead of --k")
    _common(lf)
    lf = leaf(gs, "gfsolve", "coupling", _gf_coupling, "check f_k(s, Lambda u/N) <= d_k(s, u) (Poisson-GW coupling)")
    lf.add("--n", type=int, help="N, tree arity")
    lf.add("--lambda-gw", type=float, help="Lambda, Poisson offspring mean (0 < Lambda <= N)")
    lf.add("--k", type=int, help="k, generation")
    lf.add("--s", type=float, default=0.0, help="s, generating-function argument in [0, 1]")
    lf.add("--m", type=int, default=4096, help="grid intervals M")
    _common(lf)
    lf = leaf(gs, "gfsolve", "F", _gf_F, "F_k(z) of the limit recursion and max |F_k - 1/(1+z)| against its envelope")
    lf.add("--k", type=int, help="k, iteration count")
    lf.add("--z", type=float, default=None, help="z > 0 at which to report F_k(z) (optional)")
    lf.add("--z-max", type=float, default=50.0, help="right end of the z grid")
    lf.add("--m", type=int, default=20000, help="grid intervals M")
    _common(lf)
    lf = leaf(gs, "gfsolve", "G", _gf_G, "G_k(mu, lambda/N, N), the finite-N Laplace-transform recursion")
    lf.add("--mu", type=float, help="mu >= 0, Laplace variable")
    lf.add("--k", type=int, help="k, iteration count")
    lf.add("--n", type=int, help="N, tree arity")
    lf.add("--lam", type=float, default=0.0, help="lambda, root fitness lambda/N")
    lf.add("--m", type=int, default=None, help="grid intervals M (default max(4096, 32 N))")
    _common(lf)

    # --- experiment ----------------------------------------------------------
    g = groups.add_parser("experiment", help="reproducible experiment pipelines (CSV + manifest + SVG)")
    gs = g.add_subparsers(dest="op", metavar="EXPERIMENT", parser_class=_Parser)
    gs.required = True

    def n_sweep(lf, default_ns):
        lf.add("--ns", type=_int_list, default=None, help=f"explicit list of N, e.g. {_fmt(default_ns)}")
        lf.add("--n-min", type=int, default=None, help="smallest N of a doubling sweep (with --n-max)")
        lf.add("--n-max", type=int, default=None, help="largest N of the sweep")
        lf.add("--n-step", type=int, default=None, help="arithmetic step for the sweep (default: doubling)")
        lf.add("--m", type=int, default=None, help="grid intervals M (default max(4096, 32 N))")

    lf = leaf(gs, "experiment", "phase-curve", _exp_run, "mean log Z_{N, floor(alpha N)} / N against theta(alpha)", stochastic=True)
    lf.add("--alpha", type=_float_list, default=[0.5, 1.0, 1.5, 2.0, 2.5], help="alpha values (< e), comma separated")
    lf.add("--n", type=int, default=14, help="N, tree arity")
    lf.add("--replicates", type=int, default=200, help="replicates per alpha")
    lf.add("--population-cap", type=int, default=simulate.DEFAULT_POPULATION_CAP, help="largest generation expanded")
    _common(lf)
    lf = leaf(gs, "experiment", "decay-rate", _exp_run, "plateau of log P_0(Z_{N, floor(alpha N)} >= 1)/N for alpha >= e")
    lf.add("--alpha", type=_float_list, default=[3.0], help="alpha values (>= e), comma separated")
    n_sweep(lf, [100, 120, 140, 160, 180, 200])
    _common(lf)
    lf = leaf(gs, "experiment", "critical-exponent", _exp_run, "slope of log P_0(Z_{N, floor(eN)} >= 1) against log N")
    n_sweep(lf, [50, 71, 100, 141, 200, 283, 400, 566, 800])
    _common(lf)
    lf = leaf(gs, "experiment", "critical-window", _exp_run, "survival at k = round(eN - beta log N) over a (beta, N) lattice")
    lf.add("--beta", type=_float_list, default=[0.5, 1.5, 3.0], help="beta values, comma separated")
    n_sweep(lf, [50, 100, 200, 400])
    _common(lf)
    lf = leaf(gs, "experiment", "limit-law", _exp_run, "law of Z_{N,N}/m_N from root fitness lambda/N vs e^{-lambda} W", stochastic=True)
    lf.add("--n", type=int, default=14, help="N, tree arity (also the generation k = N)")
    lf.add("--lam", type=float, default=0.0, help="lambda, root fitness lambda/N")
    lf.add("--replicates", type=int, default=2000, help="independent replicates")
    lf.add("--population-cap", type=int, default=simulate.DEFAULT_POPULATION_CAP, help="largest generation expanded")
    _common(lf)
    lf = leaf(gs, "experiment", "rerun", _exp_rerun, "re-run an experiment from its manifest and compare CSV checksums")
    lf.add("--manifest", type=str, help="path of a *.manifest.json file")
    _common(lf)

    # exact-group leaves share the common flags too
    for (group, _), lf in leaves.items():
        if group == "exact":
            _common(lf)
    return root, leaves


# ---------------------------------------------------------------------------
# config resolution
# ---------------------------------------------------------------------------


def load_config(path) -> Dict[str, str]:
    """Parse a flat ``key = value`` file (``#`` comments, blank lines allowed)."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"--config: cannot read {path}: {exc.strerror}") from None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{i}: expected 'key = value', got {raw.strip()!r}")
        key, value = (t.strip() for t in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if not key:
            raise UsageError(f"{path}:{i}: empty key")
        out[key] = value
    return out


def _resolve(args, lf: _Leaf) -> Dict[str, object]:
    ns = vars(args)
    file_values = load_config(args.config) if args.config else {}
    resolved = {}
    for key in file_values:
        if key not in lf.types:
            valid = ", ".join(sorted(k.replace("_", "-") for k in lf.types))
            raise UsageError(f"--config: unknown key {key!r}; valid keys: {valid}")
    for dest, conv in lf.types.items():
        value = ns.get(dest)
        if value is None and dest in file_values:
            try:
                value = conv(file_values[dest])
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"--config: bad value for {dest!r}: {exc}") from None
        if value is None:
            default = lf.defaults[dest]
            if default is _NO_DEFAULT:
                raise UsageError(
                    f"missing required flag --{dest.replace('_', '-')}\n{lf.parser.format_usage().rstrip()}"
                )
            value = default
        resolved[dest] = value
    if lf.stochastic and resolved.get("seed") is None:
        resolved["seed"] = secrets.randbits(64)
    if resolved.get("output_dir") is None:
        resolved["output_dir"] = os.environ.get(OUTPUT_DIR_ENV) or "accperc-output"
    return resolved


def _print_config(group, op, cfg, err):
    print(f"# accperc {__version__}: {group} {op}", file=err)
    for key in sorted(cfg):
        print(f"# {key} = {_fmt(cfg[key])}", file=err)


# ---------------------------------------------------------------------------
# handlers: each returns a list of (label, value) pairs for stdout
# ---------------------------------------------------------------------------


def _exact_phi(c):
    return [(None, exact.phi(c["k"], c["j"]))]


def _exact_psi(c):
    return [(None, exact.psi(c["k"], c["j"], c["eps"]))]


def _exact_theta(c):
    return [(None, exact.theta(c["alpha"]))]


def _exact_moments(c):
    m1 = exact.mean_Z(c["n"], c["k"], c["x"])
    m2 = exact.second_moment_Z(c["n"], c["k"], c["x"])
    return [
        ("mean", m1.mean),
        ("log_mean", m1.log_mean),
        ("second_moment", m2.second_moment),
        ("normalized_second_moment", m2.normalized_second_moment),
    ]


def _exact_prob_a(c):
    return [("prob_A", exact.prob_A(c["l"], c["k"])), ("bound_A", exact.bound_A(c["l"], c["k"]))]


def _exact_pz(c):
    return [("log_lower_bound", exact.paley_zygmund_lower(c["n"], c["k"], c["eps"])),
            ("lower_bound", math.exp(exact.paley_zygmund_lower(c["n"], c["k"], c["eps"])))]


def _branching_cfg(c):
    lower = None if c.get("eps") is None else simulate.tilted_lower_bounds(c["k"], c["eps"])
    window = None if (c["a"], c["b"]) == (0.0, 1.0) else (c["a"], c["b"])
    return simulate.BranchingConfig(
        c["n"], c["k"], c["x"], window=window, level_lower_bounds=lower,
        population_cap=c["population_cap"], seed=c["seed"],
    )


def _sim_survival(c):
    est = simulate.estimate_survival(_branching_cfg(c), c["replicates"], c["threads"])
    lo, hi = est.interval
    return [("p_hat", est.p_hat), ("ci95_low", lo), ("ci95_high", hi), ("successes", est.successes),
            ("replicates", est.replicates), ("seed", c["seed"])]


def _sim_population(c):
    batch = simulate.sample_counts(_branching_cfg(c), c["replicates"], c["threads"])
    z = batch.final.astype(float)
    n = max(z.size, 1)
    return [
        ("mean", float(z.mean()) if z.size else math.nan),
        ("mean_se", float(z.std(ddof=1) / math.sqrt(n)) if z.size > 1 else math.nan),
        ("second_moment", float(np.mean(z ** 2)) if z.size else math.nan),
        ("survival_fraction", float(np.mean(z > 0)) if z.size else math.nan),
        ("truncated", int(batch.truncated.sum())),
        ("replicates", batch.replicates),
        ("seed", c["seed"]),
    ]


def _sim_brute(c):
    z = simulate.brute_force_tree(c["n"], c["k"], c["x"], c["replicates"], c["seed"], c["threads"]).astype(float)
    return [("mean", float(z.mean())), ("second_moment", float(np.mean(z ** 2))),
            ("survival_fraction", float(np.mean(z > 0))), ("replicates", z.size), ("seed", c["seed"])]


def _gf_survival(c):
    k = c["k"]
    if c.get("alpha") is not None:
        k = experiments.k_alpha(c["alpha"], c["n"])
    elif k is None:
        raise UsageError("gfsolve survival needs --k or --alpha")
    sol = gfsolve.solve_survival(c["n"], k, c["m"])
    return [("survival", sol.p), ("log_survival", sol.log_p), ("k", k), ("M", sol.M),
            ("doubling_rel_change", sol.doubling_rel_change), ("precision_warning", sol.precision_warning)]


def _gf_coupling(c):
    res = gfsolve.check_coupling(c["n"], c["lambda_gw"], c["k"], c["s"], c["m"])
    return [("passed", res.passed), ("max_violation", res.max_violation), ("tolerance", res.tolerance)]


def _gf_F(c):
    it = gfsolve.iterate_F(c["k"], z_max=c["z_max"], M=c["m"], direct=False)
    dev = float(np.max(np.abs(it.F - 1.0 / (1.0 + it.z))))
    env = float(np.max(2.0 ** -c["k"] * it.delta_max[0] * it.z ** 2 / (1.0 + it.z) ** 3))
    out = [("max_abs_deviation", dev), ("envelope", env), ("delta_max", float(it.delta_max[-1]))]
    if c.get("z") is not None:
        out.insert(0, ("F", float(np.interp(c["z"], it.z, it.F))))
    return out


def _gf_G(c):
    return [(None, gfsolve.iterate_G(c["mu"], c["k"], c["n"], c["m"], lam=c["lam"]))]


_EXP_PARAM_MAP = {
    "phase-curve": {"alpha": "alphas", "n": "N", "replicates": "replicates", "seed": "seed",
                    "population_cap": "population_cap"},
    "decay-rate": {"alpha": "alphas", "m": "M"},
    "critical-exponent": {"m": "M"},
    "critical-window": {"beta": "betas", "m": "M"},
    "limit-law": {"n": "N", "lam": "lam", "replicates": "replicates", "seed": "seed",
                  "population_cap": "population_cap"},
}


def _sweep(c, name):
    if c.get("ns") is not None:
        if c.get("n_min") is not None or c.get("n_max") is not None:
            raise UsageError("give either --ns or --n-min/--n-max, not both")
        return list(c["ns"])
    lo, hi = c.get("n_min"), c.get("n_max")
    if lo is None and hi is None:
        return None
    if lo is None or hi is None or not 1 <= lo <= hi:
        raise UsageError("--n-min and --n-max must both be given with 1 <= n-min <= n-max")
    step = c.get("n_step")
    if step is not None:
        if step < 1:
            raise UsageError("--n-step must be positive")
        return list(range(lo, hi + 1, step))
    out = [lo]
    while out[-1] * 2 <= hi:
        out.append(out[-1] * 2)
    return out


def _exp_run(c):
    name = c["_experiment"]
    params = {dst: c[src] for src, dst in _EXP_PARAM_MAP[name].items() if c.get(src) is not None}
    if "ns" in c:
        ns = _sweep(c, name)
        if ns is not None:
            params["Ns"] = ns
    result = experiments.run_experiment(name, params, c["output_dir"], threads=c["threads"])
    out = [(f"{key}_path", str(p)) for key, p in result.paths.items()]
    for key, fit in result.fits.items():
        out.append((f"fit[{key}].slope", fit.slope))
        out.append((f"fit[{key}].intercept", fit.intercept))
        out.append((f"fit[{key}].residual_rms", fit.residual_rms))
    out.extend(result.summary.items())
    c["_precision_flags"] = _precision_flags(result)
    return out


def _precision_flags(result) -> int:
    n = 0
    for tab in result.tables.values():
        if "precision_warning" in tab.header:
            n += int(np.sum(tab.column("precision_warning").astype(bool)))
    return n


def _exp_rerun(c):
    result, mismatches = experiments.rerun_from_manifest(c["manifest"], c["output_dir"], threads=c["threads"])
    c["_precision_flags"] = _precision_flags(result)
    out = [(f"{key}_path", str(p)) for key, p in result.paths.items()]
    out.append(("checksum_mismatches", len(mismatches)))
    for m in mismatches:
        out.append(("mismatch", m))
    if mismatches:
        c["_failed"] = True
    return out


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------


def parse_and_dispatch(argv: Optional[List[str]] = None, *, out=None, err=None) -> int:
    """Parse ``argv``, run the operation and return the exit status."""
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    root, leaves = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        try:
            args = root.parse_args(argv)
        except SystemExit as exc:  # --help / --version
            return int(exc.code or 0)
        lf = leaves[(args.group, args.op)]
        cfg = _resolve(args, lf)
    except UsageError as exc:
        print(f"accperc: error: {exc}", file=err)
        return 1

    _print_config(args.group, args.op, cfg, err)
    cfg["_experiment"] = args.op
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", gfsolve.PrecisionWarning)
        try:
            rows = lf.handler(cfg)
        except UsageError as exc:
            print(f"accperc: error: {exc}", file=err)
            return 1
        except (DomainError, experiments.ExperimentError, ValueError) as exc:
            print(f"accperc: error: {exc}", file=err)
            return 1
    precision = [w for w in caught if issubclass(w.category, gfsolve.PrecisionWarning)]
    for w in caught:
        print(f"accperc: warning: {w.message}", file=err)

    for label, value in rows:
        print(_fmt(value) if label is None else f"{label} = {_fmt(value)}", file=out)

    if cfg.get("_failed"):
        return 1
    if cfg["strict"] and (precision or cfg.get("_precision_flags", 0)):
        print("accperc: precision check failed under --strict", file=err)
        return 2
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    return parse_and_dispatch(argv)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
