# %% [markdown]
# # The permutation game
#
# Below the precondition-maximal s the testing sample barely touches the
# training samples, the likelihood ratio of the observable hit counts stays
# small, and every tester is close to a coin.  At 20 numsamples the
# hits-difference tester is essentially perfect.

# %%
from disttest import (
    BUILTIN_TESTERS,
    indistinguishability_experiment,
    lower_h_bound_experiment,
    make_hard_pair,
    norms,
)
from disttest.lowerbound import max_lower_bound_s

# %%
p, q = make_hard_pair(4096)
s_lo = max_lower_bound_s(p, q)
s_hi = round(20 * norms(p, q).numsamples)
print(s_lo, s_hi)

# %%
b = lower_h_bound_experiment(p, q, s_lo, 500, seed=1)
print(b.ratio_le_8_frac, b.helpful_frac, b.ratio_quantiles)

# %%
for s in (s_lo, 4 * s_lo, 16 * s_lo, s_hi):
    rep = indistinguishability_experiment(p, q, s, BUILTIN_TESTERS, 400, seed=2, check_preconditions=False)
    print(s, {k: round(v, 3) for k, v in rep.error_rate.items()})
