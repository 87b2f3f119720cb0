"""Grid solvers for the generating-function recursions.

Every recursion here has the shape ``h_{k+1} = T(int h_k)`` with ``h`` the
*complement* of a generating function (``h = 1 - f``), which is where all the
information lives once ``f`` is within rounding of 1:

* N-ary tree:    ``g_{k+1}(b) = 1 - (1 - int_0^b g_k)^N``,  ``g_1 = 1 - (1 - (1-s) b)^N``
* Poisson tree:  ``e_{k+1}(x) = 1 - exp(-Lambda int_0^x e_k)``, ``e_1 = 1 - exp(Lambda x (s-1))``
* Laplace form:  ``H_{k+1}(y) = 1 - (1 - int_0^y H_k)^N`` in ``y = 1 - x``,
  ``H_0 = 1 - exp(-mu y^N)``

so one driver (:func:`_iterate_complement`) serves all of them.  The
complements vanish at the origin like powers of the abscissa, which is the
case :func:`~accperc.numerics.cumulative_integral_loglog` is built for.

The limit recursion ``F_{k+1}(z) = exp(-int_0^z (1 - F_k(u))/u du)`` is solved
through the rescaled defect ``Delta_k`` (see :func:`iterate_F`).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

from .numerics import (
    DomainError,
    complement_power,
    cumulative_integral,
    cumulative_integral_loglog,
    uniform_grid,
)

__all__ = [
    "PrecisionWarning",
    "GridFunction",
    "SurvivalSolution",
    "CouplingResult",
    "FIteration",
    "DEFAULT_TOL",
    "default_grid_size",
    "iterate_f",
    "survival_prob",
    "solve_survival",
    "iterate_d",
    "check_coupling",
    "iterate_F",
    "delta0",
    "iterate_G",
    "iterate_G_grid",
]

#: Relative change allowed between grids ``M`` and ``2M`` before a result is
#: flagged as imprecise.
DEFAULT_TOL = 1e-6

_RULES = {
    "loglog": lambda g, grid: cumulative_integral_loglog(g, grid=grid),
    "trapezoid": lambda g, grid: cumulative_integral(g, grid=grid),
}


class PrecisionWarning(UserWarning):
    """Grid doubling changed a result by more than the tolerance."""


def default_grid_size(N: int) -> int:
    """Default number of grid intervals: ``max(4096, 32 N)``."""
    return max(4096, 32 * int(N))


@dataclass
class GridFunction:
    """A function sampled at ``M + 1`` equispaced nodes of ``[0, upper]``.

    Attributes
    ----------
    values : ndarray
        The function in the stated ``representation``.
    representation : {"raw_value", "survival_complement"}
        ``survival_complement`` stores ``1 - f``.
    complement : ndarray
        ``1 - f`` as computed by the solver (the precise quantity in either
        representation).
    upper : float
        Right end of the grid.
    doubling_rel_change : float or None
        Relative change of the complement at the right end when the grid is
        doubled; ``None`` when the check was skipped.
    precision_warning : bool
        True when ``doubling_rel_change`` exceeded the tolerance.
    """

    values: np.ndarray
    representation: str
    complement: np.ndarray
    upper: float = 1.0
    doubling_rel_change: Optional[float] = None
    precision_warning: bool = False

    @property
    def grid_points(self) -> int:
        return self.values.size - 1

    @property
    def grid(self) -> np.ndarray:
        return uniform_grid(self.grid_points, self.upper)


def _iterate_complement(
    base: Callable[[np.ndarray], np.ndarray],
    step: Callable[[np.ndarray], np.ndarray],
    n_steps: int,
    M: int,
    upper: float,
    rule: str,
) -> np.ndarray:
    if rule not in _RULES:
        raise DomainError(f"unknown quadrature rule {rule!r}; choose from {sorted(_RULES)}")
    integrate = _RULES[rule]
    grid = uniform_grid(M, upper)
    h = base(grid)
    for _ in range(n_steps):
        if not np.any(h):
            break  # identically zero is a fixed point
        h = step(integrate(h, grid))
    return h


def _rel_change(coarse: float, fine: float) -> float:
    if coarse == fine:
        return 0.0
    scale = max(abs(fine), abs(coarse))
    return abs(coarse - fine) / scale


def _with_doubling(solve, M, check, tol, what):
    h = solve(M)
    change = None
    flagged = False
    if check:
        h2 = solve(2 * M)
        change = _rel_change(h[-1], h2[-1])
        if change > tol:
            flagged = True
            warnings.warn(
                f"{what}: doubling the grid from M={M} changed the result by "
                f"{change:.2e} (relative), above tolerance {tol:.0e}",
                PrecisionWarning,
                stacklevel=3,
            )
    return h, change, flagged


def _check_f_args(N, k, s, M):
    if int(N) != N or N < 1:
        raise DomainError(f"N must be a positive integer, got {N!r}")
    if int(k) != k or k < 1:
        raise DomainError(f"k must be a positive integer, got {k!r}")
    if not 0.0 <= s <= 1.0:
        raise DomainError(f"s must lie in [0, 1], got {s!r}")
    if M < 64:
        raise DomainError(f"grid needs M >= 64 intervals, got {M}")


def iterate_f(
    N: int,
    k: int,
    s: float = 0.0,
    M: Optional[int] = None,
    *,
    b_max: float = 1.0,
    rule: str = "loglog",
    check_doubling: bool = True,
    tol: float = DEFAULT_TOL,
) -> GridFunction:
    """The generating function ``f_k(s, b) = E[s^{Z_{N,k}(b)}]`` on ``[0, b_max]``.

    Iterates ``f_{k+1}(b) = [1 - b + int_0^b f_k]^N`` from
    ``f_1 = [1 - b + s b]^N`` in complement form.  For ``s = 0`` the
    survival complement ``g_k(b) = P(Z_{N,k}(b) >= 1)`` is returned, which is
    accurate down to about 1e-300; otherwise raw values are returned.

    Parameters
    ----------
    N, k : int
        Arity and generation.
    s : float
        Generating-function argument in ``[0, 1]``.
    M : int, optional
        Grid intervals (default :func:`default_grid_size`).
    b_max : float
        Right end of the grid; the recursion on ``[0, b_max]`` is closed.
    rule : {"loglog", "trapezoid"}
        Cumulative quadrature rule.
    check_doubling : bool
        Re-run on ``2M`` intervals and compare the right-end value.
    tol : float
        Relative tolerance of the doubling check.
    """
    M = default_grid_size(N) if M is None else int(M)
    _check_f_args(N, k, s, M)
    if not 0.0 < b_max <= 1.0:
        raise DomainError("b_max must lie in (0, 1]")

    def solve(m):
        return _iterate_complement(
            lambda b: complement_power((1.0 - s) * b, N),
            lambda I: complement_power(I, N),
            k - 1,
            m,
            b_max,
            rule,
        )

    g, change, flagged = _with_doubling(solve, M, check_doubling, tol, f"iterate_f(N={N}, k={k}, s={s})")
    if s == 0.0:
        return GridFunction(g, "survival_complement", g, b_max, change, flagged)
    return GridFunction(1.0 - g, "raw_value", g, b_max, change, flagged)


@dataclass(frozen=True)
class SurvivalSolution:
    """Survival probability ``P_0(Z_{N,k} >= 1)`` with its grid diagnostics."""

    N: int
    k: int
    p: float
    M: int
    doubling_rel_change: Optional[float]
    precision_warning: bool

    @property
    def log_p(self) -> float:
        return math.log(self.p) if self.p > 0 else -math.inf


def solve_survival(
    N: int,
    k: int,
    M: Optional[int] = None,
    *,
    rule: str = "loglog",
    check_doubling: bool = True,
    tol: float = DEFAULT_TOL,
) -> SurvivalSolution:
    """Like :func:`survival_prob` but returns the diagnostics too."""
    M = default_grid_size(N) if M is None else int(M)
    if k == 1:
        _check_f_args(N, k, 0.0, M)
        return SurvivalSolution(N, k, 1.0, M, 0.0 if check_doubling else None, False)
    gf = iterate_f(N, k, 0.0, M, rule=rule, check_doubling=check_doubling, tol=tol)
    return SurvivalSolution(N, k, float(gf.values[-1]), M, gf.doubling_rel_change, gf.precision_warning)


def survival_prob(
    N: int,
    k: int,
    M: Optional[int] = None,
    *,
    rule: str = "loglog",
    check_doubling: bool = True,
    tol: float = DEFAULT_TOL,
) -> float:
    """``P_0(Z_{N,k} >= 1) = g_k(1)``.

    A :class:`PrecisionWarning` is issued when doubling the grid changes the
    value by more than ``tol`` (relative).

    >>> round(survival_prob(2, 2), 12) == round(8 / 9, 12)
    True
    """
    return solve_survival(N, k, M, rule=rule, check_doubling=check_doubling, tol=tol).p


def iterate_d(
    Lambda: float,
    k: int,
    s: float = 0.0,
    M: int = 4096,
    *,
    x_max: float = 1.0,
    rule: str = "loglog",
    check_doubling: bool = True,
    tol: float = DEFAULT_TOL,
) -> GridFunction:
    """Generating function ``d_k(s, x)`` of the decreasing-label Poisson tree.

    ``d_{k+1}(x) = exp(-Lambda x + Lambda int_0^x d_k)``, ``d_1 = exp(Lambda x (s-1))``,
    iterated in complement form; raw values are returned.
    """
    if not Lambda > 0:
        raise DomainError("Lambda must be positive")
    if int(k) != k or k < 1:
        raise DomainError("k must be a positive integer")
    if not 0.0 <= s <= 1.0:
        raise DomainError("s must lie in [0, 1]")
    if M < 64:
        raise DomainError("grid needs M >= 64 intervals")

    def solve(m):
        return _iterate_complement(
            lambda x: -np.expm1(Lambda * x * (s - 1.0)),
            lambda I: -np.expm1(-Lambda * I),
            k - 1,
            m,
            x_max,
            rule,
        )

    e, change, flagged = _with_doubling(solve, M, check_doubling, tol, f"iterate_d(Lambda={Lambda}, k={k})")
    return GridFunction(1.0 - e, "raw_value", e, x_max, change, flagged)


@dataclass(frozen=True)
class CouplingResult:
    """Outcome of comparing ``f_k(s, Lambda u / N)`` with ``d_k(s, u)``."""

    passed: bool
    max_violation: float
    tolerance: float


def check_coupling(
    N: int,
    Lambda: float,
    k: int,
    s: float = 0.0,
    M: int = 4096,
    *,
    tol: float = 1e-8,
    rule: str = "loglog",
) -> CouplingResult:
    """Verify ``f_k(s, Lambda u / N) <= d_k(s, u)`` on a grid of ``u`` in ``[0, 1]``.

    ``f`` is iterated on ``[0, Lambda/N]`` with the same number of intervals
    as ``d`` on ``[0, 1]``, so ``b_i = (Lambda/N) u_i`` node by node and no
    interpolation is needed.  The violation ``max(f - d)`` is computed as
    ``max(e - g)`` from the complements, so it is not swamped by rounding
    of values near 1.
    """
    if not 0 < Lambda <= N:
        raise DomainError("check_coupling needs 0 < Lambda <= N")
    f = iterate_f(N, k, s, M, b_max=Lambda / N, rule=rule, check_doubling=False)
    d = iterate_d(Lambda, k, s, M, rule=rule, check_doubling=False)
    violation = float(np.max(d.complement - f.complement))
    violation = max(violation, 0.0)
    return CouplingResult(violation <= tol, violation, tol)


# ---------------------------------------------------------------------------
# the limit recursion F_k and its defect Delta_k
# ---------------------------------------------------------------------------


def _log1p_minus_x(z: np.ndarray) -> np.ndarray:
    """``log(1+z) - z`` without cancellation for small ``z``."""
    z = np.asarray(z, dtype=float)
    out = np.log1p(z) - z
    small = z < 0.05
    zs = z[small]
    acc = np.zeros_like(zs)
    zn = zs * zs
    for n in range(2, 40):  # sum_{n>=2} (-1)^{n+1} z^n / n
        acc += (zn if n % 2 else -zn) / n
        zn = zn * zs
    out[small] = acc
    return out


def delta0(z) -> np.ndarray:
    """``Delta_0(z) = (1+z)^3 / z^2 [1/(1+z) - e^{-z}]``, accurate as ``z -> 0``.

    The limit at 0 is 1/2, since ``1/(1+z) - e^{-z} = z^2/2 + O(z^3)``.
    """
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z > 0
    zp = z[pos]
    out[pos] = (1.0 + zp) ** 2 / zp ** 2 * -np.expm1(_log1p_minus_x(zp))
    out[~pos] = 0.5
    return out


@dataclass
class FIteration:
    """Iterates of the limit recursion on a grid of ``z`` (node 0 excluded).

    Attributes
    ----------
    z : ndarray
        Grid nodes in ``(0, z_max]``.
    F : ndarray
        ``F_k(z)``.
    delta : ndarray
        ``Delta_k(z) = 2^k (1+z)^3 / z^2 [1/(1+z) - F_k(z)]``.
    delta_max : ndarray
        ``max_z Delta_j(z)`` for ``j = 0..k``.
    delta_min : ndarray
        ``min_z Delta_j(z)`` for ``j = 0..k``.
    F_direct : ndarray or None
        ``F_k`` from iterating the exponential form directly (cross-check).
    """

    z: np.ndarray
    F: np.ndarray
    delta: np.ndarray
    delta_max: np.ndarray
    delta_min: np.ndarray
    F_direct: Optional[np.ndarray] = field(default=None)

    @property
    def k(self) -> int:
        return self.delta_max.size - 1


def _z_grid(z_grid, z_max, M):
    if z_grid is None:
        return uniform_grid(M, z_max)
    z = np.asarray(z_grid, dtype=float)
    if z.ndim != 1 or z.size < 3:
        raise DomainError("z_grid needs at least 3 points")
    h = z[1] - z[0]
    if h <= 0 or np.max(np.abs(np.diff(z) - h)) > 1e-9 * z[-1]:
        raise DomainError("z_grid must be uniform and increasing")
    if z[0] == 0.0:
        return z
    if abs(z[0] - h) > 1e-9 * z[-1]:
        raise DomainError("z_grid must start at 0 or at its own step size")
    return np.concatenate([[0.0], z])


def iterate_F(
    k: int,
    z_grid=None,
    *,
    z_max: float = 50.0,
    M: int = 20000,
    direct: bool = True,
) -> FIteration:
    """Iterate ``F_{k+1}(z) = exp(-int_0^z (1 - F_k(u))/u du)`` from ``F_0 = e^{-z}``.

    The fixed point is ``1/(1+z)``.  Writing
    ``F_k = 1/(1+z) - 2^{-k} z^2 Delta_k / (1+z)^3`` turns the recursion into

    ``F_{k+1}(z) = exp(-J_k(z)/2^k) / (1+z)``,
    ``Delta_{k+1}(z) = 2^{k+1} (1+z)^2 / z^2 (1 - exp(-J_k(z)/2^k))``,

    with ``J_k(z) = int_0^z u Delta_k(u) / (1+u)^3 du``, a smooth integral
    (cumulative Simpson).  This avoids the cancellation in ``1/(1+z) - F_k``
    that makes ``Delta_k`` unusable from ``F_k`` directly at large ``k``.

    With ``direct=True`` the exponential form is also iterated directly
    (cumulative Simpson rule, the removable singularity at ``u = 0`` filled by the
    one-sided difference estimate of ``-F_k'(0)``) as an independent check.

    Parameters
    ----------
    k : int
        Number of iterations.
    z_grid : array_like, optional
        Uniform grid starting at 0 or at its own step; otherwise
        ``M`` intervals on ``[0, z_max]``.
    """
    if int(k) != k or k < 0:
        raise DomainError("k must be a nonnegative integer")
    zg = _z_grid(z_grid, z_max, M)
    z = zg[1:]
    zsq = (1.0 + zg) ** 2
    delta = delta0(zg)
    F = np.exp(-zg)
    dmax = [float(delta[1:].max())]
    dmin = [float(delta[1:].min())]
    for j in range(k):
        J = cumulative_simpson(zg * delta / (1.0 + zg) ** 3, x=zg, initial=0.0)
        a = J / 2.0 ** j
        F = np.exp(-a) / (1.0 + zg)
        new = np.empty_like(delta)
        new[1:] = 2.0 ** (j + 1) * zsq[1:] / zg[1:] ** 2 * -np.expm1(-a[1:])
        new[0] = delta[0]  # the limit at 0 is preserved by the recursion
        delta = new
        dmax.append(float(delta[1:].max()))
        dmin.append(float(delta[1:].min()))
    F_direct = None
    if direct:
        Fd = np.exp(-zg)
        h = zg[1] - zg[0]
        for _ in range(k):
            integrand = np.empty_like(Fd)
            integrand[1:] = -np.expm1(np.log(Fd[1:])) / zg[1:]
            # -F'(0) from a third-order one-sided difference; lower orders are
            # amplified by log(z/h) per iteration through the 1/u weight
            integrand[0] = -(-11.0 * Fd[0] + 18.0 * Fd[1] - 9.0 * Fd[2] + 2.0 * Fd[3]) / (6.0 * h)
            Fd = np.exp(-cumulative_simpson(integrand, x=zg, initial=0.0))
        F_direct = Fd[1:]
    return FIteration(z, F[1:], delta[1:], np.array(dmax), np.array(dmin), F_direct)


# ---------------------------------------------------------------------------
# the Laplace-transform recursion G_k
# ---------------------------------------------------------------------------


def iterate_G_grid(
    mu: float,
    k: int,
    N: int,
    M: Optional[int] = None,
    *,
    rule: str = "loglog",
    check_doubling: bool = True,
    tol: float = DEFAULT_TOL,
) -> GridFunction:
    """``G_k(mu, x, N)`` on a grid of ``x``, as a raw-value :class:`GridFunction`.

    ``G_{k+1}(x) = [x + int_x^1 G_k]^N`` with ``G_0 = exp(-mu (1-x)^N)``.  In
    ``y = 1 - x`` the complement ``H = 1 - G`` obeys
    ``H_{k+1}(y) = 1 - (1 - int_0^y H_k)^N`` with ``H_0 = 1 - exp(-mu y^N)``,
    the same power-type recursion as the survival complement.  The returned
    arrays are indexed by ``x`` (ascending).
    """
    if mu < 0:
        raise DomainError("mu must be nonnegative")
    if int(k) != k or k < 0:
        raise DomainError("k must be a nonnegative integer")
    if int(N) != N or N < 1:
        raise DomainError("N must be a positive integer")
    M = default_grid_size(N) if M is None else int(M)

    def base(y):
        with np.errstate(divide="ignore"):
            yN = np.exp(N * np.log(y))
        return -np.expm1(-mu * yN)

    def solve(m):
        if mu == 0:
            return np.zeros(m + 1)
        H = _iterate_complement(base, lambda I: complement_power(I, N), k, m, 1.0, rule)
        return H

    # doubling is judged at x = 0, i.e. y = 1, the right end in y
    H, change, flagged = _with_doubling(solve, M, check_doubling and mu > 0, tol, f"iterate_G(mu={mu}, k={k}, N={N})")
    H_x = H[::-1].copy()
    return GridFunction(1.0 - H_x, "raw_value", H_x, 1.0, change, flagged)


def iterate_G(
    mu: float,
    k: int,
    N: int,
    M: Optional[int] = None,
    *,
    lam: float = 0.0,
    rule: str = "loglog",
    check_doubling: bool = True,
    tol: float = DEFAULT_TOL,
) -> float:
    """``G_k(mu, lam/N, N)``; interpolated with a cubic spline when ``lam/N``
    is not a grid node.

    As ``N`` grows this tends to ``F_k(mu e^{-lam})`` and, for large ``k``,
    to ``1 / (1 + mu e^{-lam})``.
    """
    if not 0.0 <= lam <= N:
        raise DomainError("lam must lie in [0, N]")
    gf = iterate_G_grid(mu, k, N, M, rule=rule, check_doubling=check_doubling, tol=tol)
    x = lam / N
    grid = gf.grid
    pos = x * gf.grid_points
    if abs(pos - round(pos)) < 1e-9:
        return float(gf.values[int(round(pos))])
    H = CubicSpline(grid, gf.complement)(x)
    return float(1.0 - H)
