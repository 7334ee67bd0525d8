"""Bias and variance laws of the two estimators on a linear-Gaussian model.

For ``y = theta d + eps`` with ``theta ~ N(0, 1)`` and ``eps ~ N(0, s2)``
everything is closed form: the evidence is ``N(0, d^2 + s2)``, the lower
bound core is ``1 / (2 sqrt(pi (d^2 + s2)))`` and the information gain is
``log(1 + d^2 / s2) / 2``. The core estimator is unbiased at every budget,
its variance falls like ``1/(NM)``; the nested estimator is biased upward
by roughly ``const / M``.

    python demos/linear_estimator_laws.py
"""
import math

from oedkit import GaussianLikelihood, LinearModel, Normal, PriorSpec, SampleBudget
from oedkit.eig import estimator_diagnostics

d, s2 = 1.0, 0.25
model, lik, prior = LinearModel(), GaussianLikelihood(s2, m=1), PriorSpec([Normal(0.0, 1.0)])
core_true = 1.0 / (2.0 * math.sqrt(math.pi * (d * d + s2)))
eig_true = 0.5 * math.log1p(d * d / s2)
print(f"closed forms: core = {core_true:.5f}, EIG = {eig_true:.5f}, "
      f"lower bound = {eig_true + 0.5 * math.log(2 / math.e):.5f}")

budgets = [SampleBudget(100, m, 7) for m in (1, 10, 100, 1000)]
tab = estimator_diagnostics(model, lik, prior, [d], budgets, replications=50, reference=eig_true)
print(f"{'N':>5} {'M':>5} {'core mean':>10} {'(truth-mean)/se':>16} {'core var':>10} {'dlmc bias':>10}")
for r in tab.rows:
    z = (r["core_mean"] - core_true) / r["core_se"]
    print(f"{r['N']:5d} {r['M']:5d} {r['core_mean']:10.5f} {z:16.2f} {r['core_var']:10.2e} {r['dlmc_bias']:10.4f}")
v, b = tab.core_variance_fit, tab.dlmc_bias_fit
print(f"core variance ~ 1/(NM): slope {v.slope:.3e}, R2 {v.r_squared:.3f}")
print(f"dlmc bias ~ 1/M:        slope {b.slope:.3f}, R2 {b.r_squared:.3f}")
