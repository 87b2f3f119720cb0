"""Independent reference computations used by the tests.

Nothing here imports the package: the rational oracle integrates the nested
volume with exact ``Fraction`` polynomial arithmetic, and the enumerations
are written directly from the model's definition.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction


def _integrate(poly):
    """Antiderivative (zero constant) of a polynomial given low-to-high."""
    return [Fraction(0)] + [c / (i + 1) for i, c in enumerate(poly)]


def _evaluate(poly, t):
    acc = Fraction(0)
    for c in reversed(poly):
        acc = acc * t + c
    return acc


def rational_volume(lower, cap=Fraction(1)):
    """Exact volume of ``{u_1 < ... < u_k <= cap : u_j >= b_j}``.

    ``lower`` must be nondecreasing (every family used in the tests is).
    The nested integral ``int_{b_k}^{cap} int_{b_{k-1}}^{u_k} ... du_1 ... du_k``
    is built inside out as a polynomial in the upper limit.
    """
    lower = [Fraction(b) for b in lower]
    cap = Fraction(cap)
    assert all(a <= b for a, b in zip(lower, lower[1:])), "oracle needs nondecreasing bounds"
    if lower[-1] > cap:
        return Fraction(0)
    poly = [Fraction(1)]
    for b in lower:
        anti = _integrate(poly)
        poly = anti[:]
        poly[0] -= _evaluate(anti, b)
    return _evaluate(poly, cap)


def phi_oracle(k, J):
    return rational_volume([Fraction(j, J) for j in range(1, k + 1)])


def psi_oracle(k, J, eps):
    eps = Fraction(eps)
    return rational_volume([eps + (1 - eps) * Fraction(j - 1, J) for j in range(1, k + 1)])


def enumerate_pairs_second_moment(N, k):
    """``E_0[Z_{N,k}^2]`` by summing over ordered pairs of depth-``k`` leaves.

    A pair whose paths share their first ``q`` vertices contributes the
    probability that a branched chain of ``q`` shared then ``k - q`` + ``k - q``
    separate increasing labels is accessible:
    ``C(2k-2q, k-q) / (2k-q)!`` (shared prefix below both tails, tails
    interleaved arbitrarily).
    """
    total = Fraction(0)
    leaves = list(itertools.product(range(N), repeat=k))
    for a in leaves:
        for b in leaves:
            q = 0
            while q < k and a[q] == b[q]:
                q += 1
            if q == k:
                total += Fraction(1, math.factorial(k))
            else:
                total += Fraction(math.comb(2 * k - 2 * q, k - q), math.factorial(2 * k - q))
    return total


def survival_rational(N, k):
    """``P_0(Z_{N,k} >= 1)`` as an exact rational by symbolic iteration of
    ``f_{j+1}(b) = (1 - b + int_0^b f_j)^N`` from ``f_1(b) = (1 - b)^N``."""
    import sympy as sp

    y, b = sp.symbols("y b")
    f = (1 - b) ** N
    for _ in range(k - 2):
        f = sp.expand((1 - b + sp.integrate(f.subs(b, y), (y, 0, b))) ** N)
    if k == 1:
        return sp.Integer(1)
    return 1 - sp.integrate(f.subs(b, y), (y, 0, 1)) ** N
