"""Crash modification factors from printed yearly effects.

A CMF summarises a run of yearly relative changes gamma_y = delta_y / pi_y
(lam is the expected count with treatment, pi without). The crash
reduction factor is minus their unweighted mean and CMF = 1 - CRF.
"""

import numpy as np

from crash_itsa import datasets
from crash_itsa.effects import EffectTable
from crash_itsa.panel import lane_miles

# ## Exposure
#
# Rates are crashes per 100 lane-miles per month. The treated corridors are
# weighted 1 each; matched controls carry their match multiplicity.

print(f"treated lane-miles: {lane_miles(datasets.treated_sections(), 'treated'):.2f}")
print(f"control lane-miles: {lane_miles(datasets.control_sections(), 'control'):.2f}")

# Activation dates such as "8&12/2002" are resolved to the last listed month.
sched = datasets.activation_schedule("last")
w = datasets.WINDOW
oct_2002 = w.index(2002, 10)
print(f"level in October 2002: {sched.cumulative[oct_2002]:.0f} of {sched.total_units} sections active")

# ## Yearly effects, 2003 to 2010
#
# Gamma is given in percent. All crashes fall from +3.7% to -13.2%.

years = list(range(2003, 2011))
all_crashes = EffectTable.from_gammas([3.7, 1.4, -0.9, -3.3, -5.7, -8.1, -10.6, -13.2], years)
bike = EffectTable.from_gammas([97.6, 117.7, 140.6, 166.9, 197.6, 233.8, 277.1, 329.8], years)

for name, table in (("all", all_crashes), ("bike", bike)):
    print(f"{name:>5}: CRF = {table.crf:+.4f}  CMF = {table.cmf:.4f}  (rounded {table.cmf:.2f})")

# The bike series has a small counterfactual base, so the same absolute
# change produces very large relative changes and a CMF far above 1.
# An unweighted mean treats every year alike; a pooled ratio weights by pi.

g = np.array(bike.gamma)
print(f"bike mean gamma {g.mean():.3f} vs last-year gamma {g[-1]:.3f}")
