# %% [markdown]
# # Two-stage distinguisher on a hard pair
#
# The norms of the two hard-pair halves are equal, so the norm stage almost
# never decides and the collision stage does the work.  l is scaled down to
# 100 (flagged in every row) so the estimator's outlier check passes.

# %%
import numpy as np

from disttest import ExperimentSpec, run_spec

# %%
rows, _ = run_spec(ExperimentSpec("sweep", instance="gen:hard:1024", trials=30, overrides={"l": "100"}))
for r in rows:
    print(f"s={r['s']:8d}  accuracy={r['accuracy']:.3f}  norm-stage={r['norm_stage_frac']:.2f}"
          f"  mean draws={r['mean_budget']:.3g}")

# %% [markdown]
# With an identical pair there is nothing to find and the answers are a coin.

# %%
rows, _ = run_spec(ExperimentSpec("distinguish", instance="gen:same:1024", s=1174671, trials=100,
                                  overrides={"l": "100"}))
print(np.mean([r["answer"] == "P" for r in rows]))
