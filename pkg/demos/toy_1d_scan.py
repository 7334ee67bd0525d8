"""Scan the lower-bound gain of the 1-D toy model and locate its two maxima.

The toy response ``G(k, d) = k^3 d^2 + k exp(-|0.2 - d|)`` is most sensitive
to ``k`` at ``d = 0.2`` for small ``k`` and at ``d = 1`` for large ``k``;
the split point is ``kappa_e``. Restricting the prior to either side of it
moves the global maximum accordingly.

    python demos/toy_1d_scan.py [N]
"""
import sys
import time

import numpy as np

from oedkit import GaussianLikelihood, PriorSpec, SampleBudget, ToyModel, Uniform, grid_scan
from oedkit.models import kappa_e

N = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
grid = np.linspace(0.0, 1.0, 101)
model, lik = ToyModel(), GaussianLikelihood(1e-4, m=1)
ke = kappa_e()
print(f"kappa_e = {ke:.5f}, N = M = {N}")

for label, prior in [("U(0, 1)", PriorSpec([Uniform(0, 1)])),
                     ("U(0, kappa_e)", PriorSpec([Uniform(0, ke)])),
                     ("U(kappa_e, 1)", PriorSpec([Uniform(ke, 1)]))]:
    t0 = time.perf_counter()
    est = grid_scan("lower-bound", model, lik, prior, grid, SampleBudget(N, N, 11))
    v = np.array([e.value for e in est])
    print(f"{label:>14}: argmax d = {grid[np.argmax(v)]:.2f}, U(0.2) = {v[20]:.3f}, U(1) = {v[100]:.3f}"
          f"  [{time.perf_counter() - t0:.1f} s]")

# coarse profile of the full-prior scan, one bar per 0.05
prof = grid_scan("lower-bound", model, lik, PriorSpec([Uniform(0, 1)]), grid[::5], SampleBudget(N, N, 12))
vals = np.array([e.value for e in prof])
lo, hi = vals.min(), vals.max()
for d, e in zip(grid[::5], prof):
    print(f"d = {d:4.2f} {'#' * int(1 + 39 * (e.value - lo) / (hi - lo)):<40} {e.value:6.3f} +- {e.std_error:.3f}")
