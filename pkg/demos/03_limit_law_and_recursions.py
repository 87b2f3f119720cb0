# %% [markdown]
# # The generation-N population and the limit recursions
#
# With k = N generations and root fitness lambda / N, the normalised
# population Z / m_N with m_N = N^N / N! converges in law to e^{-lambda} W,
# W a standard exponential.  The Laplace transform G_k of the finite-N law
# and its limit F_k are computed by fixed-point recursions whose fixed point
# is 1 / (1 + z), the transform of W.

# %% Setup
import math
from pathlib import Path

import numpy as np

from accperc.experiments import rerun_from_manifest, run_experiment
from accperc.gfsolve import check_coupling, iterate_F, iterate_G

OUT = Path("demo-output") / "limit_law"

# %% [markdown]
# ## Simulated law at N = 10
#
# The summary compares the sample mean with the exact finite-N mean
# (1 - lambda/N)^N, and reports the Kolmogorov-Smirnov distance to the
# exponential with mean e^{-lambda}.

# %%
res = run_experiment("limit-law", {"N": 10, "lam": 1.0, "replicates": 1000, "seed": 5}, OUT)
s = res.summary
print(f"mean {s['mean']:.4f} ± {s['mean_se']:.4f}  exact {s['exact_mean']:.4f}  e^-1 = {math.exp(-1):.4f}")
print(f"KS distance {s['ks_distance']:.4f}; E[W^2]/E[W]^2 {s['normalized_second_moment']:.3f} "
      f"(exact at N=10: {s['exact_normalized_second_moment']:.3f}, limit 2)")

# %% [markdown]
# ## Reproducibility
#
# Every run writes a manifest; re-running from it reproduces the CSVs
# byte for byte at any thread count.

# %%
_, mismatches = rerun_from_manifest(res.paths["manifest"], OUT / "rerun", threads=4)
print("checksum mismatches:", mismatches)

# %% [markdown]
# ## Limit recursion F_k
#
# F_0(z) = e^{-z} and F_{k+1}(z) = exp(-int_0^z (1 - F_k(u))/u du).  The
# distance to 1/(1+z) halves every step, inside the envelope
# 2^{-k} M z^2 / (1+z)^3.

# %%
for k in (0, 5, 10, 15):
    it = iterate_F(k, z_max=50.0, M=20000, direct=False)
    dev = np.max(np.abs(it.F - 1 / (1 + it.z)))
    env = np.max(2.0 ** -k * it.delta_max[0] * it.z ** 2 / (1 + it.z) ** 3)
    print(f"k={k:2d}  max|F_k - 1/(1+z)| = {dev:.3e}   envelope {env:.3e}")

# %% [markdown]
# ## Finite-N recursion G_k
#
# G_k(mu, 0, N) approaches F_k(mu) as N grows, with an O(1/N) gap: at
# k = 12, (G - 1/2) N settles near 21.

# %%
F12 = iterate_F(12, z_grid=np.linspace(0, 1, 2001), direct=False)
print("F_12(1) =", F12.F[-1])
for N in (50, 100, 200, 400):
    g = iterate_G(1.0, 12, N)
    print(f"N={N:4d}  G_12 = {g:.6f}   (G - 1/2) N = {(g - 0.5) * N:.2f}")

# %% [markdown]
# ## Coupling with a Poisson Galton-Watson tree
#
# The finite-N generating function is dominated by that of the decreasing
# process on a Poisson(Lambda) tree.

# %%
print(check_coupling(50, 25.0, 10, 0.0))
