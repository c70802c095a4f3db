"""A sparse problem with square-root terms.

The gun-type problem mixes a stiffness/mass pencil with two square-root
couplings, shifted and scaled so the interesting eigenvalues sit near the
origin. Its matrices have norm around 1e5, so the locking test uses the
normwise backward error rather than the absolute residual.
"""

import numpy as np

from infarnoldi import gun_like, infarn_restart

problem = gun_like(n=200)
x0 = np.ones(problem.n)
pair, record = infarn_restart(problem, x0, 0.5, k_max=30, p=8, residual="relative")

print(f"{problem.name}: {record.status} after {len(record.entries)} sweeps, gamma {pair.residual_gamma:.1e}")
print("eigenvalue (shifted, scaled)     backward error    original frequency^2")
for lam, err in zip(pair.eigenvalues, pair.per_eig_residuals):
    kappa = 5e4 * lam + 250.0**2
    print(f"  {lam:.10f}   {err:.1e}        {kappa:.6g}")
