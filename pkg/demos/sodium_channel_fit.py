"""
Fitting sodium-channel gating parameters with ABC-SMC
=====================================================

Synthetic patch-clamp summaries are generated from the original parameter
set plus 1% noise, then the nine shape parameters are inferred back from
uniform priors.  A full run (200 particles, 12 generations) takes a few
minutes; the settings below are a quick look.
"""
import numpy as np

from epworkbench.abc import (ABCConfig, PriorSpec, fit_sodium_channel, posterior_stats,
                             synthetic_observations)
from epworkbench.channel import ORIGINAL, PARAM_NAMES, run_protocol_suite

for curve in run_protocol_suite():
    print(f"{curve.kind:13s}", np.round(curve.values[:6], 3), "...")

observed = synthetic_observations(ORIGINAL, noise=0.01, seed=1)
prior = PriorSpec.sodium_channel()
pops = fit_sodium_channel(observed, ABCConfig(n_particles=60, max_generations=6, seed=3), prior)

for pop in pops:
    print(f"generation {pop.generation}: eps {pop.epsilon:.4g}, "
          f"acceptance {pop.acceptance_rate:.3f}")

stats = posterior_stats(pops[-1], PARAM_NAMES)
print(f"{'':4s}{'orig':>9s}{'mean':>9s}{'min':>9s}{'max':>9s}  width/prior")
for k, name in enumerate(PARAM_NAMES):
    width = (stats.max[k] - stats.min[k]) / prior.width[k]
    print(f"{name:4s}{ORIGINAL.vector()[k]:9.4g}{stats.mean[k]:9.4g}"
          f"{stats.min[k]:9.4g}{stats.max[k]:9.4g}  {width:.0%}")
