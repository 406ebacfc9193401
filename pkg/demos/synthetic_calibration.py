"""Calibrate the six parameters on synthetic data and look at what is identified."""
import numpy as np

from fundcurve.calibration import CalibrationProblem, OptimizerConfig, bootstrap_se, calibrate
from fundcurve.synthetic import calibration_problem

# Ten days of random books that all share one set of utility shares. Load is
# an exact affine function of the ASD volume plus a little noise.
true = (10.0, 1.0, 0.5, 0.9, 0.3, 0.1)
snaps, loads, _ = calibration_problem(n_days=10, params=true, noise_sd=5.0, seed=1)
problem = CalibrationProblem(snaps, loads)
print(len(problem), "hours, mean load", loads.mean().round(1))

res = calibrate(problem, OptimizerConfig(n_starts=3, max_iters=500))
print("fitted:", res.params)
print("theta0 =", round(res.theta0, 2), " theta1 =", round(res.theta1, 4), " sse =", round(res.sse, 2))

# Correlation of load with the three volume series. The fundamental volume
# should track load best, the raw WM volume worst.
for name, c in zip(("v_W", "v_C", "v_F"), res.correlations):
    print(f"corr(load, {name}) = {c:.3f}")

# Only two products of the proportions enter the FM volume, so these are
# what the data pins down. Individual proportions can sit anywhere on the
# level set.
p = res.params
print("(1-beta1)*phi1 =", round((1 - p.beta1) * p.phi1, 3), " true", (1 - true[5]) * true[3])
print("alpha1*gamma1  =", round(p.alpha1 * p.gamma1, 3), " true", true[4] * true[2])

# Day-block bootstrap. Each refit is warm-started at the fit and stays on its
# part of the level set, so these errors do not reflect the flat directions.
se = bootstrap_se(problem, p, n_resamples=10, config=OptimizerConfig(max_iters=200))
print({k: round(v, 3) for k, v in se.items()})

# Residuals of the load fit.
resid = problem.loads - (res.theta0 + res.theta1 * res.v_F_series)
print("residual sd", np.nanstd(resid).round(2))
