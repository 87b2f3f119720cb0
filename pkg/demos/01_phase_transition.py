# %% [markdown]
# # The phase transition at alpha = e
#
# Label every vertex of the infinite N-ary tree with an independent uniform
# fitness and call a vertex *accessible* when the fitnesses along its ancestral
# line increase.  With k = alpha N generations, the number Z of accessible
# vertices at generation k behaves like
#
# ```
#   theta(alpha) = alpha (1 - log alpha)
#   alpha < e :  log Z / N  -> theta(alpha) > 0
#   alpha > e :  log P(Z >= 1) / N -> theta(alpha) < 0
# ```
#
# This notebook walks through both sides with the exact first moment, Monte
# Carlo simulation and the survival-complement solver.

# %% Setup
import math
from pathlib import Path


from accperc.exact import mean_Z, second_moment_Z, theta
from accperc.experiments import run_decay_rate, run_experiment
from accperc.gfsolve import solve_survival
from accperc.simulate import BranchingConfig, estimate_survival

OUT = Path("demo-output") / "phase_transition"

# %% [markdown]
# ## The rate function
#
# theta is positive below e, vanishes at e and is negative above it.  The
# exact mean E[Z] = N^k / k! gives the same rate through Stirling's formula;
# at finite N it sits below theta by about log(2 pi alpha N) / (2N).

# %%
for alpha in (0.5, 1.0, 2.0, math.e, 3.0, 4.0):
    N = 50
    k = int(alpha * N)
    print(f"alpha={alpha:6.4f}  theta={theta(alpha):+.5f}  log E[Z]/N (N=50) = {mean_Z(N, k).log_mean / N:+.5f}")

# %% [markdown]
# ## Second moment: how concentrated is Z?
#
# E[Z^2] / E[Z]^2 tends to 2 (1 - x) / (2 (1 - x) - alpha) for alpha < 2 (1 - x).
# At alpha = 1 from root fitness 0 the ratio is 2: Z / E[Z] has an
# exponential-type limit rather than concentrating.

# %%
for N in (25, 100, 400):
    print(N, second_moment_Z(N, N).normalized_second_moment)

# %% [markdown]
# ## Below e: simulate the population
#
# `run_experiment` writes a CSV, a manifest and an SVG.  The CSV has the
# limit theta, the finite-N reference log E[Z]/N and the simulated mean of
# log Z / N side by side.

# %%
res = run_experiment("phase-curve", {"alphas": [0.5, 1.0, 1.5], "N": 12, "replicates": 100, "seed": 1}, OUT)
tab = res.table
for row in tab.rows:
    r = dict(zip(tab.header, row))
    print(f"alpha={r['alpha']:.1f}  theta={r['theta']:.3f}  log E[Z]/N={r['log_mean_over_n']:.3f}  "
          f"simulated={r['mean_log_z_over_n']:.3f} ± {r['se']:.3f}")
print("plot:", res.paths["svg"])

# %% [markdown]
# ## Above e: exponentially rare survival
#
# The survival probability is obtained exactly (up to quadrature) by iterating
# the complement g = 1 - f of the generating function, so values like 1e-40
# are represented without cancellation.  Monte Carlo agrees where it can
# still see survivors.

# %%
sol = solve_survival(6, 20)
est = estimate_survival(BranchingConfig(6, 20, seed=3), 200_000)
print(f"N=6, k=20: solver {sol.p:.5f}, Monte Carlo {est.p_hat:.5f} ± {est.ci_halfwidth_95:.5f}")

dec = run_decay_rate(alphas=(3.0,), Ns=(100, 120, 140, 160, 180, 200))
print("plateau of log P / N:", dec.summary["plateau[alpha=3]"], " theta(3):", theta(3.0))
print("largest N survival:", dec.table.column("survival")[-1])
