"""The two simulator benchmarks.

The SIR model's peak infected count as the infection rate varies, and
the newsvendor profit for a few inventory choices under random demand.
"""

import numpy as np

from ptrbo.benchmarks import NewsvendorParams, newsvendor_simulate, sir_simulate

print("SIR peak infected (recovery rate 0.15)")
for r in (0.1, 0.2, 0.3, 0.4, 0.5):
    print(f"  infection rate {r:.1f}: {sir_simulate(r, 0.15):8.1f}")

params = NewsvendorParams()
rng = np.random.default_rng(0)
w = rng.gamma(params.w_shape, 1.0, size=(200, 2))
print("\nnewsvendor mean profit over 200 demand draws")
for x in ([10, 10], [20, 40], [40, 40], [50, 50]):
    prof = newsvendor_simulate(np.tile(np.asarray(x, float), (200, 1)), w, 20, 1, params)
    print(f"  inventory {x}: {prof.mean():7.1f} (sd {prof.std():.1f})")
