"""Probabilistic reparameterization on binary Branin.

Fits a GP to a few points, then looks at the probabilistic objective
E[EI(x, Z)] with Z ~ Bernoulli(theta): exact value, Monte-Carlo estimates
and the score-function gradient.
"""
import numpy as np

from mixedbo import reparam
from mixedbo.acquisition import AcquisitionFunction
from mixedbo.problems import get_problem
from mixedbo.surrogate import fit_gp

prob = get_problem("branin_binary")
space = prob.space
print(space)

# surrogates model -f because acquisition functions are maximized
X = space.sobol_init(10, seed=0)
y = -prob.evaluate_batch(X)[0]
model = fit_gp((X, y), space, seed=0)
ei = AcquisitionFunction("ei", model, incumbent=y.max())

# The binary coordinate becomes a probability theta in [0, 1].
# At theta = 0 or 1 the objective is just EI at a fixed design.
grid = np.linspace(-5, 10, 301)[:, None]
x = grid[np.argmax(reparam.analytic_po(ei, space, grid, np.full((301, 1), 0.5))[0])]
print(f"x = {x[0]:.2f} maximizes the objective at theta = 0.5")
for theta in (0.0, 0.3, 0.7, 1.0):
    value, g_theta, g_x = reparam.analytic_po(ei, space, x, np.array([theta]))
    print(f"theta={theta:.1f}  PO={value:.4e}  dPO/dtheta={g_theta[0]:+.4e}  dPO/dx={g_x[0]:+.4e}")

# MC estimates with N=128 samples scatter around the exact value
rng = np.random.default_rng(1)
theta = np.array([0.3])
exact = reparam.analytic_po(ei, space, x, theta)[0]
z = reparam.sample(space, theta, 128 * 500, rng).reshape(500, 128, 1)
batches = reparam.mc_po(ei, space, x, theta, z)
print(f"exact {exact:.5e}, MC mean {batches.mean():.5e} +- {batches.std() / np.sqrt(500):.1e}")

# The optimizer does not move theta directly: raw parameters phi pass
# through a tempered sigmoid so every configuration keeps positive mass.
for tau in (1.0, 0.1, 0.01):
    t, _ = reparam.transform(space, np.array([0.6]), tau=tau)
    print(f"tau={tau:<5} phi=0.6 -> theta={t[0]:.4f}")

# The score-function gradient with a fixed baseline is unbiased; the
# baseline only changes its variance.
z = reparam.sample(space, theta, 10 ** 5, rng)
for b in (0.0, exact):
    g, _ = reparam.mc_po_grad(ei, space, x, theta, z, baseline=b)
    print(f"baseline {b:.4e}: gradient estimate {g[0]:+.5e}")
print(f"exact gradient {reparam.analytic_po(ei, space, x, theta)[1][0]:+.5e}")
