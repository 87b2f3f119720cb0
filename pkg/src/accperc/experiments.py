"""Reproducible experiment pipelines.

Each runner returns an :class:`ExperimentResult` holding one or more
:class:`Table` objects (plus fits and a summary).  :func:`run_experiment`
executes a named runner and writes, into an output directory,

* ``<name>.csv`` (and any auxiliary tables) -- RFC-4180 CSV with a header row,
  ``\\r\\n`` line ends and floats printed with 17 significant digits;
* ``<name>.manifest.json`` -- the full configuration, seed, rounding
  conventions, tool versions and SHA-256 checksums of the CSVs;
* ``<name>.svg`` -- a self-contained plot (see :mod:`accperc.plotting`).

:func:`rerun_from_manifest` reads a manifest back and reproduces the CSVs
byte-for-byte.  Every theoretical reference value sits in a column next to
the empirical one, so the checks can be made from the CSV alone.
"""

from __future__ import annotations

import csv
import hashlib
import inspect
import io
import json
import math
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import stats as sstats

from . import __version__
from .exact import (
    critical_lower_constant,
    mean_Z,
    paley_zygmund_lower,
    second_moment_Z,
    theta,
)
from .gfsolve import default_grid_size, solve_survival
from .numerics import log_factorial
from .plotting import emit_plot
from .simulate import (
    DEFAULT_POPULATION_CAP,
    BranchingConfig,
    resolve_threads,
    sample_counts,
)
from .stats import FitResult, linear_fit, mean_and_se, plateau_fit

__all__ = [
    "SCHEMA_VERSION",
    "ROUNDING",
    "FitResult",
    "Table",
    "ExperimentResult",
    "ExperimentManifest",
    "ExperimentError",
    "k_alpha",
    "k_beta",
    "derive_seed",
    "run_phase_curve",
    "run_decay_rate",
    "run_critical_exponent",
    "run_critical_window",
    "run_limit_law",
    "EXPERIMENTS",
    "run_experiment",
    "rerun_from_manifest",
    "read_csv",
    "emit_plot",
    "sha256_file",
]

SCHEMA_VERSION = 1

#: Integer conventions, recorded in every manifest.
ROUNDING = {
    "k_alpha": "k = floor(alpha * N)",
    "k_beta": "k = round(e * N - beta * log(N)), round-half-to-even",
    "root_lambda": "root fitness = lambda / N (exact division)",
}

#: Theta below this value is flagged as near-critical in the phase curve.
NEAR_CRITICAL_THETA = 0.05


class ExperimentError(RuntimeError):
    """An experiment cannot produce valid output (e.g. a population cap hit)."""


def k_alpha(alpha: float, N: int) -> int:
    return int(math.floor(alpha * N))


def k_beta(beta: float, N: int) -> int:
    return int(round(math.e * N - beta * math.log(N)))


def derive_seed(seed: int, *path: int) -> int:
    """Independent 64-bit seed for parameter point ``path`` of a run."""
    ss = np.random.SeedSequence([int(seed) & ((1 << 64) - 1), *[int(p) for p in path]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# ---------------------------------------------------------------------------
# tables and CSV
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


@dataclass
class Table:
    """Named rectangular result with a fixed column order."""

    name: str
    header: List[str]
    rows: List[tuple] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        j = self.header.index(name)
        return np.array([r[j] for r in self.rows])

    def to_csv_bytes(self) -> bytes:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(self.header)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue().encode("utf-8")


def read_csv(path, text_columns: Sequence[str] = ()) -> Table:
    """Read a CSV written by this module back into a :class:`Table`.

    Every field is parsed as a float except those in ``text_columns``,
    which are kept as strings.

    Raises
    ------
    ExperimentError
        When the file is empty, lacks a header, or has a ragged or
        non-numeric row (the row number is reported).
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ExperimentError(f"{path}: empty CSV (no header row)")
    header, body = rows[0], rows[1:]
    if not body:
        raise ExperimentError(f"{path}: CSV has a header but no data rows")
    is_text = [h in text_columns for h in header]
    parsed = []
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise ExperimentError(f"{path}: row {i} has {len(r)} fields, header has {len(header)}")
        try:
            parsed.append(tuple(v if t else float(v) for v, t in zip(r, is_text)))
        except ValueError as exc:
            raise ExperimentError(f"{path}: row {i}: non-numeric field ({exc})") from None
    return Table(path.stem, header, parsed)


@dataclass
class ExperimentResult:
    """Tables, fits and summary values of one experiment run."""

    name: str
    tables: Dict[str, Table]
    fits: Dict[str, FitResult] = field(default_factory=dict)
    summary: Dict[str, float] = field(default_factory=dict)
    paths: Dict[str, Path] = field(default_factory=dict)

    @property
    def table(self) -> Table:
        """The primary table (named like the experiment)."""
        return self.tables[self.name]


def _map_ordered(fn, items, threads):
    """``list(map(fn, items))`` on a thread pool, preserving order."""
    n = min(resolve_threads(threads), max(len(items), 1))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------


def run_phase_curve(
    alphas: Sequence[float] = (0.5, 1.0, 1.5, 2.0, 2.5),
    N: int = 14,
    replicates: int = 200,
    seed: int = 0,
    population_cap: int = DEFAULT_POPULATION_CAP,
    threads=None,
) -> ExperimentResult:
    """Empirical ``(1/N) log Z_{N, floor(alpha N)}`` against ``theta(alpha)``.

    For each ``alpha < e`` the population is simulated from root fitness 0;
    ``log Z / N`` is averaged over surviving, untruncated replicates.  Besides
    the limit ``theta(alpha)`` the table carries the finite-``N`` reference
    ``log E_0[Z] / N = (k log N - log k!)/N``, which differs from
    ``theta(alpha)`` by about ``-log(2 pi alpha N)/(2N)``.
    """
    header = [
        "alpha", "N", "k", "theta", "log_mean_over_n", "mean_log_z_over_n", "se",
        "survivors", "replicates", "cap_hits", "near_critical",
    ]
    table = Table("phase_curve", header)
    for i, alpha in enumerate(alphas):
        if not 0 < alpha < math.e:
            raise ExperimentError(f"phase curve needs 0 < alpha < e, got {alpha}")
        k = k_alpha(alpha, N)
        if k < 1:
            raise ExperimentError(f"alpha={alpha} gives k=0 at N={N}")
        cfg = BranchingConfig(N, k, 0.0, population_cap=population_cap, seed=derive_seed(seed, i))
        batch = sample_counts(cfg, replicates, threads)
        z = batch.final
        z = z[z > 0]
        m, se = mean_and_se(np.log(z) / N) if z.size else (math.nan, math.nan)
        th = theta(alpha)
        table.rows.append((
            float(alpha), N, k, th, mean_Z(N, k, 0.0).log_mean / N, m, se,
            int(z.size), replicates, int(batch.truncated.sum()), th < NEAR_CRITICAL_THETA,
        ))
    return ExperimentResult("phase_curve", {"phase_curve": table})


def _survival_rows(points, M, threads):
    def solve(pt):
        N, k = pt
        return solve_survival(N, k, M)

    return _map_ordered(solve, points, threads)


def run_decay_rate(
    alphas: Sequence[float] = (3.0,),
    Ns: Sequence[int] = (100, 120, 140, 160, 180, 200),
    M: Optional[int] = None,
    threads=None,
) -> ExperimentResult:
    """Exponential decay rate of survival for ``alpha > e``.

    For every ``alpha`` the values ``y_N = log P_0(Z_{N, floor(alpha N)} >= 1)/N``
    are fitted as ``y = plateau + g log(N)/N + c/N`` (:func:`plateau_fit`,
    needs at least 4 values of ``N``); the plateau is compared with
    ``theta(alpha)``.  At ``alpha = e`` the sawtooth of ``floor(eN)`` makes the
    residual behave like noise, and the plateau should be within three
    residual RMS of 0.  Columns include the first-moment upper
    bound and the second-moment lower bound (both divided by ``N``).
    """
    header = [
        "alpha", "N", "k", "survival", "log_survival_over_n", "theta",
        "log_upper_over_n", "log_lower_over_n", "doubling_rel_change", "precision_warning",
    ]
    table = Table("decay_rate", header)
    fits = {}
    summary = {}
    for alpha in alphas:
        if not alpha >= math.e:
            raise ExperimentError(f"decay rate needs alpha >= e, got {alpha}")
        pts = [(int(N), k_alpha(alpha, N)) for N in Ns]
        sols = _survival_rows(pts, M, threads)
        ys = []
        for (N, k), s in zip(pts, sols):
            y = s.log_p / N
            ys.append(y)
            table.rows.append((
                float(alpha), N, k, s.p, y, theta(alpha),
                mean_Z(N, k, 0.0).log_mean / N, paley_zygmund_lower(N, k) / N,
                s.doubling_rel_change, s.precision_warning,
            ))
        if len(Ns) >= 4:
            fit = plateau_fit(Ns, ys)
            fits[f"alpha={alpha:g}"] = fit
            summary[f"plateau[alpha={alpha:g}]"] = fit.intercept
            summary[f"residual_rms[alpha={alpha:g}]"] = fit.residual_rms
            th = theta(alpha)
            summary[f"rel_error[alpha={alpha:g}]"] = abs(fit.intercept - th) / abs(th) if th else math.nan
    return ExperimentResult("decay_rate", {"decay_rate": table}, fits, summary)


def run_critical_exponent(
    Ns: Sequence[int] = (50, 71, 100, 141, 200, 283, 400, 566, 800),
    M: Optional[int] = None,
    threads=None,
) -> ExperimentResult:
    """Fit ``log P_0(Z_{N, floor(eN)} >= 1)`` against ``log N``.

    Reference columns: ``survival * N^{3/2}``; the explicit lower constant
    ``c10 (N/(k+1))^{3/2} e^{theta(k/N) N}`` for the same product; the exact
    second-moment lower bound; and the first-moment upper bound.
    """
    header = [
        "N", "k", "survival", "log_survival", "log_n", "survival_n15",
        "lower_constant_n15", "pz_lower", "mean_upper", "doubling_rel_change", "precision_warning",
    ]
    table = Table("critical_exponent", header)
    pts = [(int(N), k_alpha(math.e, N)) for N in Ns]
    sols = _survival_rows(pts, M, threads)
    c10 = critical_lower_constant()
    for (N, k), s in zip(pts, sols):
        lower = c10 * (N / (k + 1.0)) ** 1.5 * math.exp(theta(k / N) * N)
        table.rows.append((
            N, k, s.p, s.log_p, math.log(N), s.p * N ** 1.5, lower,
            math.exp(paley_zygmund_lower(N, k)), math.exp(mean_Z(N, k, 0.0).log_mean),
            s.doubling_rel_change, s.precision_warning,
        ))
    fit = linear_fit(table.column("log_n"), table.column("log_survival"))
    summary = {"slope": fit.slope, "min_survival_n15": float(table.column("survival_n15").min())}
    return ExperimentResult("critical_exponent", {"critical_exponent": table}, {"loglog": fit}, summary)


def run_critical_window(
    betas: Sequence[float] = (0.5, 1.5, 3.0),
    Ns: Sequence[int] = (50, 100, 200, 400),
    M: Optional[int] = None,
    threads=None,
) -> ExperimentResult:
    """Survival at ``k = round(eN - beta log N)`` across a ``(beta, N)`` lattice.

    The column ``exponent`` is ``-log(survival)/log N``; at ``beta = 3/2`` it
    should trend towards 0.  The limits (1 above ``beta = 3/2``, 0 below) are
    not reachable at desk scale; the summary reports monotone trends and the
    value at the largest ``N`` for comparison with the proxy thresholds
    (>= 0.5 for ``beta > 3/2``, <= 0.2 for ``beta < 3/2``).
    """
    header = ["beta", "N", "k", "survival", "exponent", "doubling_rel_change", "precision_warning"]
    table = Table("critical_window", header)
    pts = []
    for beta in betas:
        for N in Ns:
            k = k_beta(beta, N)
            if k < 1:
                raise ExperimentError(f"beta={beta}, N={N} gives k={k} < 1")
            pts.append((float(beta), int(N), k))
    sols = _survival_rows([(N, k) for _, N, k in pts], M, threads)
    summary = {}
    for (beta, N, k), s in zip(pts, sols):
        expo = -s.log_p / math.log(N)
        table.rows.append((beta, N, k, s.p, expo, s.doubling_rel_change, s.precision_warning))
    for beta in betas:
        sel = [r for r in table.rows if r[0] == float(beta)]
        surv = np.array([r[3] for r in sel])
        expo = np.array([r[4] for r in sel])
        summary[f"increasing[beta={beta:g}]"] = float(np.all(np.diff(surv) > 0))
        summary[f"decreasing[beta={beta:g}]"] = float(np.all(np.diff(surv) < 0))
        summary[f"exponent_decreasing[beta={beta:g}]"] = float(np.all(np.diff(expo) < 0))
        summary[f"survival_at_max_n[beta={beta:g}]"] = float(surv[-1])
    return ExperimentResult("critical_window", {"critical_window": table}, {}, summary)


def run_limit_law(
    N: int = 14,
    lam: float = 0.0,
    replicates: int = 2000,
    seed: int = 0,
    population_cap: int = DEFAULT_POPULATION_CAP,
    threads=None,
) -> ExperimentResult:
    """Law of ``Z_{N,N} / m_N`` from root fitness ``lam / N``.

    ``m_N = N^N / N!``.  The limit is ``e^{-lam} W`` with ``W`` standard
    exponential; the summary table lists the sample mean (with its standard
    error) against the exact finite-``N`` mean ``(1 - lam/N)^N``, the
    normalised second moment against its exact finite-``N`` value and the
    limit 2, and the Kolmogorov-Smirnov distance to the exponential law with
    mean ``e^{-lam}``.

    Raises
    ------
    ExperimentError
        If any replicate hits the population cap (that would bias the law).
    """
    if not 0.0 <= lam <= N:
        raise ExperimentError("lam must lie in [0, N]")
    x = lam / N
    cfg = BranchingConfig(N, N, x, population_cap=population_cap, seed=derive_seed(seed, 0))
    batch = sample_counts(cfg, replicates, threads)
    if batch.truncated.any():
        raise ExperimentError(f"{int(batch.truncated.sum())} replicates hit the population cap {population_cap}")
    log_mN = N * math.log(N) - log_factorial(N)
    z = batch.counts[:, -1]
    w = z * math.exp(-log_mN)
    samples = Table("limit_law", ["replicate", "z", "w"], [(r, int(z[r]), float(w[r])) for r in range(replicates)])
    mean, se = mean_and_se(w)
    exact_mean = math.exp(N * math.log1p(-x)) if x < 1 else 0.0
    norm2 = float(np.mean(w ** 2) / mean ** 2) if mean > 0 else math.nan
    exact_norm2 = second_moment_Z(N, N, x).normalized_second_moment if x < 1 else math.nan
    scale = math.exp(-lam)
    ks = sstats.kstest(w, "expon", args=(0.0, scale))
    summary_rows = [
        ("mean", mean, exact_mean, se),
        ("normalized_second_moment", norm2, exact_norm2, 2.0),
        ("ks_distance", float(ks.statistic), 0.0, float(ks.pvalue)),
    ]
    summary_tab = Table("limit_law_summary", ["statistic", "value", "reference", "aux"], summary_rows)
    summary = {
        "mean": mean, "mean_se": se, "exact_mean": exact_mean,
        "mean_z_score": (mean - exact_mean) / se if se > 0 else math.nan,
        "normalized_second_moment": norm2, "exact_normalized_second_moment": exact_norm2,
        "ks_distance": float(ks.statistic), "ks_pvalue": float(ks.pvalue),
    }
    return ExperimentResult("limit_law", {"limit_law": samples, "limit_law_summary": summary_tab}, {}, summary)


# ---------------------------------------------------------------------------
# manifests and the named-experiment registry
# ---------------------------------------------------------------------------

#: CLI name -> (runner, plot kind)
EXPERIMENTS: Dict[str, tuple] = {
    "phase-curve": (run_phase_curve, "phase-curve"),
    "decay-rate": (run_decay_rate, "decay-rate"),
    "critical-exponent": (run_critical_exponent, "critical-exponent"),
    "critical-window": (run_critical_window, "critical-window"),
    "limit-law": (run_limit_law, "limit-law"),
}


def experiment_defaults(name: str) -> dict:
    runner = EXPERIMENTS[name][0]
    sig = inspect.signature(runner)
    return {p: v.default for p, v in sig.parameters.items() if p != "threads"}


def _jsonable(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


@dataclass
class ExperimentManifest:
    """Provenance record written next to every set of result files."""

    experiment_name: str
    config: dict
    seed: Optional[int]
    settings: dict
    artifacts: Dict[str, str]
    tool_version: str
    schema_version: int = SCHEMA_VERSION
    rounding: Dict[str, str] = field(default_factory=lambda: dict(ROUNDING))
    environment: Dict[str, str] = field(default_factory=dict)
    summary: Dict[str, float] = field(default_factory=dict)

    def to_json(self) -> str:
        d = {
            "schema_version": self.schema_version,
            "experiment_name": self.experiment_name,
            "config": self.config,
            "seed": self.seed,
            "settings": self.settings,
            "rounding": self.rounding,
            "artifacts": self.artifacts,
            "tool_version": self.tool_version,
            "environment": self.environment,
            "summary": self.summary,
        }
        return json.dumps(d, indent=2, sort_keys=True, allow_nan=True) + "\n"

    @classmethod
    def load(cls, path) -> "ExperimentManifest":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ExperimentError(f"unsupported manifest schema {d.get('schema_version')!r}")
        return cls(
            experiment_name=d["experiment_name"], config=d["config"], seed=d.get("seed"),
            settings=d.get("settings", {}), artifacts=d.get("artifacts", {}),
            tool_version=d.get("tool_version", ""), rounding=d.get("rounding", {}),
            environment=d.get("environment", {}), summary=d.get("summary", {}),
        )


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _environment() -> dict:
    import numba
    import scipy

    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def run_experiment(
    name: str,
    params: Optional[dict] = None,
    out_dir=".",
    *,
    threads=None,
    plot: bool = True,
) -> ExperimentResult:
    """Run a named experiment and write CSV(s), manifest and SVG to ``out_dir``."""
    if name not in EXPERIMENTS:
        raise ExperimentError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    runner, plot_kind = EXPERIMENTS[name]
    config = experiment_defaults(name)
    unknown = set(params or {}) - set(config)
    if unknown:
        raise ExperimentError(f"unknown parameters for {name}: {sorted(unknown)}")
    config.update(params or {})
    config = {k: _jsonable(v) for k, v in config.items()}
    result = runner(**config, threads=threads)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = {}
    for tname, tab in result.tables.items():
        p = out / f"{tname}.csv"
        p.write_bytes(tab.to_csv_bytes())
        artifacts[p.name] = sha256_file(p)
        result.paths[tname] = p
    if plot:
        svg = emit_plot(result.paths[result.name], plot_kind, out / f"{result.name}.svg", lam=float(config.get("lam", 0.0)))
        result.paths["svg"] = svg
    settings = {k: config[k] for k in ("M", "replicates", "population_cap", "Ns", "N") if k in config}
    if "Ns" in config:
        settings["grid_M"] = {str(n): (config.get("M") or default_grid_size(int(n))) for n in config["Ns"]}
    settings["threads"] = resolve_threads(threads)
    manifest = ExperimentManifest(
        experiment_name=name,
        config=config,
        seed=config.get("seed"),
        settings=settings,
        artifacts=artifacts,
        tool_version=f"accperc {__version__}",
        environment=_environment(),
        summary={k: float(v) for k, v in result.summary.items()},
    )
    mpath = out / f"{result.name}.manifest.json"
    mpath.write_text(manifest.to_json(), encoding="utf-8")
    result.paths["manifest"] = mpath
    return result


def rerun_from_manifest(manifest_path, out_dir, *, threads=None, plot: bool = False):
    """Re-run the experiment recorded in ``manifest_path`` into ``out_dir``.

    Returns ``(result, mismatches)`` where ``mismatches`` lists the CSV files
    whose checksum differs from the one recorded in the manifest.
    """
    manifest = ExperimentManifest.load(manifest_path)
    result = run_experiment(manifest.experiment_name, manifest.config, out_dir, threads=threads, plot=plot)
    mismatches = [
        fname for fname, digest in manifest.artifacts.items()
        if sha256_file(Path(out_dir) / fname) != digest
    ]
    return result, mismatches
