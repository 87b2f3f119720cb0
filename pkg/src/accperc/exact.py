"""Closed-form probabilities and moments for accessible paths.

All quantities reduce to volumes of sets of the form

    {u_1 < u_2 < ... < u_k :  u_j >= b_j,  u_j <= cap}

for i.i.d. uniform labels, described by a :class:`PathBoundProfile`.  The
generic oracle :func:`increasing_path_prob` computes such volumes exactly (up
to floating-point rounding, with only positive terms summed); the closed forms
:func:`phi`, :func:`psi` and the families ``A_L(K)``, ``D_{i,k}`` are checked
against it in the test-suite.

Moments of the accessible count ``Z_{N,k}`` (number of generation-``k``
vertices whose ancestral labels increase, starting above the root fitness
``x``) are evaluated in log scale throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp, zeta

from .numerics import LOG_ZERO, DomainError, log_binomial, log_factorial

__all__ = [
    "C1",
    "PathBoundProfile",
    "MomentSummary",
    "phi",
    "psi",
    "log_phi",
    "log_psi",
    "increasing_path_prob",
    "profile_A",
    "profile_D",
    "profile_tilted",
    "prob_A",
    "prob_A_increment",
    "q_ik",
    "p_ik_bound",
    "bound_A",
    "u_bound",
    "log_u_bound",
    "mean_Z",
    "mean_Z_unconditioned",
    "second_moment_Z",
    "a_kq",
    "tilted_mean",
    "tilted_second_moment_bound",
    "paley_zygmund_lower",
    "critical_lower_constant",
    "theta",
    "limit_normalized_second_moment",
]

#: Constant in the ``u_{i,k}`` bound; the smallest admissible value is about
#: 1.69, and 40 is the conventional choice.
C1 = 40.0


# ---------------------------------------------------------------------------
# profiles and the generic oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PathBoundProfile:
    """Per-level lower bounds (and an optional global cap) on increasing labels.

    Attributes
    ----------
    lower : tuple of float
        ``b_1, ..., b_k`` in ``[0, 1]``.
    upper_cap : float or None
        Common upper bound on every label; ``None`` means 1.  A cap below some
        lower bound is allowed and yields probability 0.
    """

    lower: tuple
    upper_cap: Optional[float] = None

    def __init__(self, lower: Sequence[float], upper_cap: Optional[float] = None):
        lower = tuple(float(b) for b in lower)
        if len(lower) == 0:
            raise DomainError("a profile needs at least one level")
        if any(not (0.0 <= b <= 1.0) for b in lower):
            raise DomainError(f"lower bounds must lie in [0, 1]: {lower}")
        if upper_cap is not None and not (0.0 <= upper_cap <= 1.0):
            raise DomainError(f"upper cap must lie in [0, 1]: {upper_cap}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper_cap", None if upper_cap is None else float(upper_cap))

    @property
    def k(self) -> int:
        return len(self.lower)

    @property
    def top(self) -> float:
        return 1.0 if self.upper_cap is None else self.upper_cap


def increasing_path_prob(profile: PathBoundProfile) -> float:
    """Volume of ``{u_1 < ... < u_k : u_j >= b_j, u_j <= cap}``.

    Let ``F_0 = 1`` and ``F_j(t) = int_{b_j}^t F_{j-1}`` for ``t >= b_j``.
    Because the labels increase, ``b_j`` may be replaced by the running
    maximum ``b'_j = max(b_1..b_j)``; on ``[b'_j, 1]`` every ``F_j`` is then a
    single polynomial ``P_j`` with ``P_j' = P_{j-1}``.  Its Taylor expansion
    at any anchor ``a`` is therefore ``P_j(t) = sum_m P_{j-m}(a) (t-a)^m/m!``,
    so the vector ``(P_0(a), ..., P_j(a))`` determines everything.  Moving
    the anchor forward only adds positive terms, which keeps the evaluation
    free of cancellation.

    Returns
    -------
    float
        The probability; exactly 0.0 when the profile is infeasible.
    """
    bprime = np.maximum.accumulate(np.asarray(profile.lower, dtype=float))
    top = profile.top
    if bprime[-1] > top:
        return 0.0
    k = bprime.size
    # inv_fact[m] = 1/m!
    inv_fact = np.exp(-log_factorial(np.arange(k + 1)))
    vals = np.zeros(k + 1)  # vals[i] = P_i(anchor)
    vals[0] = 1.0
    anchor = 0.0
    for j in range(1, k + 1):
        shift = bprime[j - 1] - anchor
        if shift > 0.0:
            vals[:j] = _shift_taylor(vals[:j], shift, inv_fact)
            anchor = bprime[j - 1]
        vals[j] = 0.0  # P_j vanishes at its own lower bound
    vals = _shift_taylor(vals, top - anchor, inv_fact)
    return float(vals[k])


def _shift_taylor(vals: np.ndarray, d: float, inv_fact: np.ndarray) -> np.ndarray:
    """``out[i] = sum_{m<=i} vals[i-m] d^m / m!`` (positive terms only)."""
    n = vals.size
    if d == 0.0:
        return vals.copy()
    powers = d ** np.arange(n) * inv_fact[:n]
    # a Toeplitz lower-triangular product; n is small (a few hundred at most)
    return np.convolve(vals, powers)[:n]


def profile_A(L: int, K: int) -> PathBoundProfile:
    """``A_L(K)``: ``K`` increasing labels with ``U_j >= (j - L)_+ / (K + 1)``."""
    j = np.arange(1, K + 1)
    return PathBoundProfile(np.maximum(j - L, 0) / (K + 1.0))


def profile_D(i: int, k: int) -> PathBoundProfile:
    """``D_{i,k}``: ``k`` increasing labels with ``U_j >= (j - i)_+ / (k - i + 1)``."""
    if not 1 <= i <= k:
        raise DomainError("D_{i,k} needs 1 <= i <= k")
    j = np.arange(1, k + 1)
    return PathBoundProfile(np.maximum(j - i, 0) / (k - i + 1.0))


def profile_tilted(k: int, eps: float, J: Optional[int] = None) -> PathBoundProfile:
    """The tilted corridor ``U_j >= eps + (1 - eps)(j - 1)/J`` (``J`` defaults to ``k``)."""
    J = k if J is None else J
    j = np.arange(1, k + 1)
    return PathBoundProfile(eps + (1.0 - eps) * (j - 1) / J)


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def _require_int(name, value, lo):
    if int(value) != value or value < lo:
        raise DomainError(f"{name} must be an integer >= {lo}, got {value!r}")
    return int(value)


def log_phi(k: int, J: int) -> float:
    k = _require_int("k", k, 1)
    J = _require_int("J", J, 2)
    if k >= J:
        raise DomainError(f"phi needs k < J, got k={k}, J={J}")
    return math.log(J - k) - log_factorial(k) - math.log(J)


def phi(k: int, J: int) -> float:
    """Probability of ``k`` increasing uniforms with ``U_j >= j / J``.

    Equals ``(J - k) / (k! J)``.

    >>> phi(1, 2)
    0.5
    """
    return math.exp(log_phi(k, J))


def log_psi(k: int, J: int, eps: float) -> float:
    k = _require_int("k", k, 1)
    J = _require_int("J", J, 1)
    if k > J:
        raise DomainError(f"psi needs k <= J, got k={k}, J={J}")
    if not 0.0 <= eps < 1.0:
        raise DomainError(f"psi needs 0 <= eps < 1, got {eps!r}")
    return (
        k * math.log1p(1.0 / J)
        + math.log(J + 1 - k)
        - log_factorial(k)
        - math.log(J + 1)
        + k * math.log1p(-eps)
    )


def psi(k: int, J: int, eps: float) -> float:
    """Probability of ``k`` increasing uniforms with ``U_j >= eps + (1-eps)(j-1)/J``.

    Closed form ``(1 + 1/J)^k (J + 1 - k) / (k! (J + 1)) * (1 - eps)^k``.

    >>> psi(2, 2, 0.0)
    0.375
    """
    return math.exp(log_psi(k, J, eps))


def prob_A(L: int, K: int) -> float:
    """Exact ``P[A_L(K)]``; ``P[A_0(K)] = 1/(K+1)!``."""
    L = _require_int("L", L, 0)
    K = _require_int("K", K, 1)
    if L >= K:
        raise DomainError(f"prob_A needs L < K, got L={L}, K={K}")
    return increasing_path_prob(profile_A(L, K))


def prob_A_increment(i: int, K: int) -> float:
    """Exact ``P[A_{i+1}(K) \\ A_i(K)]`` as the sum over the first level
    ``k`` where the ``A_i`` bound fails, of ``p_{i,k} q_{i,k}``.

    Both factors are evaluated with :func:`increasing_path_prob`, giving an
    independent check of the closed form :func:`q_ik` and of
    ``prob_A(i+1, K) - prob_A(i, K)``.
    """
    total = 0.0
    for k in range(i + 1, K + 1):
        cap = (k - i) / (K + 1.0)
        lower_p = [0.0] * k
        for j in range(i + 1, k):
            lower_p[j - 1] = (j - i) / (K + 1.0)
        p = increasing_path_prob(PathBoundProfile(lower_p, upper_cap=cap))
        if k == K:
            q = 1.0
        else:
            lower_q = [max((j - i - 1) / (K + 1.0), cap) for j in range(k + 1, K + 1)]
            q = increasing_path_prob(PathBoundProfile(lower_q))
        total += p * q
    return total


def q_ik(i: int, k: int, K: int) -> float:
    """Closed form of the tail factor

    ``q_{i,k} = ((K+2+i-k)/(K+1))^{K-k} (i+2) / ((K-k)! (K-k+i+2))``.
    """
    n = K - k
    if n < 0:
        raise DomainError("q_ik needs k <= K")
    if n == 0:
        return 1.0
    return math.exp(
        n * math.log((K + 2.0 + i - k) / (K + 1.0))
        + math.log(i + 2.0)
        - log_factorial(n)
        - math.log(n + i + 2.0)
    )


def log_u_bound(i: int, k: int, c1: float = C1) -> float:
    """Log of ``e^{k-i} e^{c1 sqrt(i-1) + 2} / ((k+1-i)^k k^{3/2})``."""
    i = _require_int("i", i, 1)
    k = _require_int("k", k, i)
    return (k - i) + c1 * math.sqrt(i - 1) + 2.0 - k * math.log(k + 1.0 - i) - 1.5 * math.log(k)


def u_bound(i: int, k: int, c1: float = C1) -> float:
    """Upper bound on ``u_{i,k} = P(D_{i,k})`` (may exceed 1; it is a bound)."""
    return math.exp(log_u_bound(i, k, c1))


def p_ik_bound(i: int, k: int, K: int) -> float:
    """``((k-i)/(K+1))^k u_bound(i, k-1) / (k-i)``, an upper bound on ``p_{i,k}``."""
    if not i < k <= K:
        raise DomainError("p_ik_bound needs i < k <= K")
    if k - 1 < i:
        raise DomainError("p_ik_bound needs k - 1 >= i")
    return math.exp(
        k * math.log((k - i) / (K + 1.0)) + log_u_bound(i, k - 1) - math.log(k - i)
    )


def bound_A(L: int, K: int) -> float:
    """Explicit upper bound on ``P[A_L(K)]`` assembled from the increments.

    ``P[A_1(K)] + sum_{i=1}^{L-1} sum_{k=i+1}^{K} pbar_{i,k} q_{i,k}`` with
    ``pbar`` from :func:`p_ik_bound`.  No unspecified absolute constant is
    involved.
    """
    L = _require_int("L", L, 0)
    K = _require_int("K", K, 1)
    if L >= K:
        raise DomainError("bound_A needs L < K")
    if L == 0:
        return prob_A(0, K)
    # A_1(K) has bounds (j-1)/(K+1), i.e. the psi corridor with J = K + 1
    total = psi(K, K + 1, 0.0)
    for i in range(1, L):
        for k in range(i + 1, K + 1):
            total += p_ik_bound(i, k, K) * q_ik(i, k, K)
    return total


# ---------------------------------------------------------------------------
# moments of the accessible count
# ---------------------------------------------------------------------------


def _exp_or_inf(v: float) -> float:
    """``exp(v)``, saturating to ``inf`` instead of raising on overflow."""
    return math.exp(v) if v < 709.0 else math.inf


@dataclass(frozen=True)
class MomentSummary:
    """First two moments of ``Z_{N,k}`` in log scale.

    ``log_second_moment`` and ``normalized_second_moment`` are NaN when only
    the mean was requested.
    """

    log_mean: float
    log_second_moment: float = math.nan
    normalized_second_moment: float = math.nan

    @property
    def mean(self) -> float:
        return _exp_or_inf(self.log_mean)

    @property
    def second_moment(self) -> float:
        return _exp_or_inf(self.log_second_moment) if not math.isnan(self.log_second_moment) else math.nan


def _check_Nkx(N, k, x):
    _require_int("N", N, 1)
    _require_int("k", k, 1)
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"fitness must lie in [0, 1], got {x!r}")


def mean_Z(N: int, k: int, x: float = 0.0) -> MomentSummary:
    """``E_x[Z_{N,k}] = N^k (1-x)^k / k!`` (log scale)."""
    _check_Nkx(N, k, x)
    if x == 1.0:
        return MomentSummary(LOG_ZERO)
    return MomentSummary(k * math.log(N) + k * math.log1p(-x) - log_factorial(k))


def mean_Z_unconditioned(N: int, k: int) -> float:
    """Log of the mean when the root label is itself uniform: ``N^k / (k+1)!``."""
    _check_Nkx(N, k, 0.0)
    return k * math.log(N) - log_factorial(k + 1)


def a_kq(k: int, q: int, N: int, x: float) -> float:
    """``a_k(q, x) = (2k-2q)! (k!)^2 / ([(1-x)N]^q (2k-q)! ((k-q)!)^2)``."""
    if not 0 <= q <= k:
        raise DomainError("a_kq needs 0 <= q <= k")
    return math.exp(
        log_factorial(2 * k - 2 * q)
        + 2 * log_factorial(k)
        - q * (math.log(N) + math.log1p(-x))
        - log_factorial(2 * k - q)
        - 2 * log_factorial(k - q)
    )


def second_moment_Z(N: int, k: int, x: float = 0.0) -> MomentSummary:
    """Exact ``E_x[Z_{N,k}^2]``.

    Splitting pairs of generation-``k`` vertices by the depth ``q`` of their
    last common ancestor gives

    ``E[Z^2] = m + (N-1)/N sum_{q=0}^{k-1} ((1-x)N)^{2k-q} C(2k-2q, k-q) / (2k-q)!``

    where ``m = E[Z]``; each term is ``m^2 a_k(q, x)``.  The sum is
    accumulated with log-sum-exp, so no intermediate overflows.
    """
    _check_Nkx(N, k, x)
    if x >= 1.0:
        raise DomainError("second_moment_Z needs x < 1")
    log_m = mean_Z(N, k, x).log_mean
    if N == 1:
        # a single path: Z is Bernoulli(m)
        return MomentSummary(log_m, log_m, _exp_or_inf(-log_m))
    log_a = math.log(N) + math.log1p(-x)
    q = np.arange(k)
    log_terms = (
        (2 * k - q) * log_a
        + np.array([log_binomial(2 * k - 2 * qq, k - qq) for qq in q])
        - log_factorial(2 * k - q)
    )
    log_pairs = math.log1p(-1.0 / N) + logsumexp(log_terms)
    log_m2 = float(np.logaddexp(log_m, log_pairs))
    return MomentSummary(log_m, log_m2, _exp_or_inf(log_m2 - 2.0 * log_m))


def limit_normalized_second_moment(alpha: float, x: float = 0.0) -> float:
    """Large-``N`` limit of ``E[Z^2]/E[Z]^2`` at ``k = alpha N``:
    ``2(1-x) / (2(1-x) - alpha)``, valid for ``alpha < 2(1-x)``."""
    if not alpha < 2.0 * (1.0 - x):
        raise DomainError("the limit exists only for alpha < 2(1 - x)")
    return 2.0 * (1.0 - x) / (2.0 * (1.0 - x) - alpha)


def tilted_mean(N: int, k: int, eps: float) -> float:
    """Log of ``E_0[Z_{N,k,eps}] = N^k psi(k, k, eps)`` for the tilted corridor."""
    return k * math.log(N) + log_psi(k, k, eps)


def tilted_second_moment_bound(N: int, k: int, eps: float) -> float:
    """Log of the upper bound on ``E_0[Z_{N,k,eps}^2]``:

    ``E + (N-1)/N sum_{q=0}^{k-1} N^{2k-q} psi(k,k,eps) psi(k-q, k-q, eps + (1-eps) q/k)``.
    """
    log_E = tilted_mean(N, k, eps)
    lp = log_psi(k, k, eps)
    terms = [
        (2 * k - q) * math.log(N) + lp + log_psi(k - q, k - q, eps + (1.0 - eps) * q / k)
        for q in range(k)
    ]
    if N == 1:
        return log_E
    return float(np.logaddexp(log_E, math.log1p(-1.0 / N) + logsumexp(terms)))


def paley_zygmund_lower(N: int, k: int, eps: float = 0.0) -> float:
    """Log of the second-moment lower bound ``E[Z_eps]^2 / E[Z_eps^2]`` on survival."""
    return 2.0 * tilted_mean(N, k, eps) - tilted_second_moment_bound(N, k, eps)


def critical_lower_constant() -> float:
    """``c_10 = 1 / (3 (1 + c_9))`` with ``c_9 = (e/2) zeta(3/2)``.

    At ``k = floor(alpha N)`` survival is at least
    ``c_10 e^{theta(alpha) N} / (alpha N + 1)^{3/2}``.
    """
    c9 = 0.5 * math.e * float(zeta(1.5))
    return 1.0 / (3.0 * (1.0 + c9))


def theta(alpha: float) -> float:
    """Rate function ``alpha (1 - log alpha)``; zero at ``e``, maximal (=1) at 1."""
    if not alpha > 0:
        raise DomainError(f"theta needs alpha > 0, got {alpha!r}")
    return alpha * (1.0 - math.log(alpha))
