# %% [markdown]
# # Hard pairs and their separation parameters
#
# A weakly disjoint pair shares a block of common elements and splits the
# rest between the two sides. The quantity that controls the sample cost is
# numsamples = ||P+Q||_2 / ||P-Q||_2^2, which grows like n^(2/3) here.

# %%
import numpy as np

from disttest import make_hard_pair, norms, weakly_disjoint_decompose

# %%
for n in (64, 256, 1024, 4096, 16384):
    p, q = make_hard_pair(n)
    par = norms(p, q)
    print(f"n={n:6d}  numsamples={par.numsamples:9.2f}  ratio to n^(2/3)={par.numsamples / n ** (2 / 3):.3f}"
          f"  default s={par.theorem_s}")

# %% [markdown]
# The decomposition recovers the three blocks; the two disjoint masses are equal
# and add up to the l1 distance.

# %%
p, q = make_hard_pair(1024)
dec = weakly_disjoint_decompose(p, q)
print(len(dec.common), len(dec.disjoint_p), len(dec.disjoint_q))
print(dec.disjoint_mass_p, dec.disjoint_mass_q, norms(p, q).l1)

# %% [markdown]
# The default sample size s is huge next to numsamples: the log factor is raised
# to the 3.5th power.

# %%
par = norms(p, q)
print(par.theorem_s / par.numsamples)
print(np.log(par.alpha))
