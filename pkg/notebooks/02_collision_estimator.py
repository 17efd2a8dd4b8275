# %% [markdown]
# # Estimating ||P||_2^2 from collisions
#
# The estimator trains on l draws, then runs l pattern samples against the
# training counts. It gives up when some element is seen ln l times or more,
# which happens whenever the distribution is dense compared with l.

# %%
import math

import numpy as np

from disttest import DiscreteDistribution, SampleSource, estimate_l2_squared

# %%
for n, l in ((4000, 2000), (1000, 300), (100, 2000)):
    src = SampleSource(DiscreteDistribution.uniform(n), n + l)
    ests = [estimate_l2_squared(src, l) for _ in range(200)]
    vals = np.array([e.value for e in ests if not e.failed])
    print(f"uniform({n}), l={l}: completed {vals.size}/200, mean {vals.mean() if vals.size else math.nan:.6f},"
          f" truth {1 / n:.6f}, mean draws {np.mean([e.total_draws for e in ests]):.0f}")

# %% [markdown]
# The third line fails every time: each element is drawn about l/n = 20 times in
# training, far above ln 2000.  The estimator only applies when p_i <= 1/(2l).

# %%
src = SampleSource(DiscreteDistribution.uniform(100), 0)
e = estimate_l2_squared(src, 2000)
print(e.failed, e.max_count, math.log(2000))
