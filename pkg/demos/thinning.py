"""
Bernoulli thinning preserves the Poisson law
============================================

Data augmentation treats the M pseudo-individuals as a superpopulation from
which each member is real with probability psi. If the superpopulation count
is Poisson(A lam), the thinned count is again Poisson(A lam psi), which is why
the augmented model keeps the Poisson abundance model intact.

Run from the repository root::

    python demos/thinning.py
"""

import numpy as np
from scipy import stats

from stratcr.simulate import thin_superpopulation

lam, A, psi = 4.0, 5.0, 0.3
N = thin_superpopulation(lam, A, psi, size=100_000, rng=np.random.default_rng(0))
mu = A * lam * psi
print(f"sample mean {N.mean():.3f}, variance {N.var():.3f}; Poisson mean = variance = {mu}")

# %%
# Compare the empirical pmf with Poisson(A lam psi) on its bulk.
for k in range(0, 15, 2):
    print(f"  P(N={k:2d}): empirical {np.mean(N == k):.4f}  Poisson {stats.poisson.pmf(k, mu):.4f}")
