"""Stationary generator of the damped two-level emitter from its memory kernel.

Iterating ``X <- K_hat(X)`` from the Markov guess ``K_hat(0)`` converges to
the long-time generator ``G(inf)``. Its eigenvalues are a subset of the poles
of the exact propagator, and each one samples an eigenvector of ``K_hat`` at
that pole.

Run with ``python3 demos/jc_stationary_generator.py``.
"""

import numpy as np

from qmefix.fixedpoint import stationary_iterate
from qmefix.liouville import spectral_decompose
from qmefix.model_jc import JcParams, jc_g_infty, jc_kernel_hat, jc_kernel_split
from qmefix.spectral import find_poles, seed_grid, slippage, verify_sampling

p = JcParams.from_ratio(0.495, eps=1.0)
kernel = jc_kernel_split(p)

# plain iteration contracts slowly here, so switch on Anderson mixing
x, report = stationary_iterate(kernel, jc_kernel_hat(0.0, p), tol=1e-10,
                               max_iter=200, accelerate="anderson")
print(f"converged in {report.iters} iterations, residual {report.residuals[-1]:.2e}")
print(f"distance to closed form: {np.max(np.abs(x - jc_g_infty(p))):.2e}")

dec = spectral_decompose(x)
print("eigenvalues of G(inf):")
for g in dec.eigenvalues:
    print(f"  {g.real:+.6f} {g.imag:+.6f}i")

# every eigenvalue is a pole of the propagator; some poles are not sampled
poles = find_poles(lambda E: jc_kernel_hat(E, p), seed_grid((-4, 4), (-3, 0.5)),
                   reference=dec)
print("poles of Pi_hat:")
for rec in poles:
    tag = "sampled" if rec.sampled else "not sampled"
    print(f"  {rec.energy.real:+.6f} {rec.energy.imag:+.6f}i  slope {abs(rec.slope):.3f}  {tag}")

sampling = verify_sampling(dec, lambda E: jc_kernel_hat(E, p))
print(f"rebuilt from sampled eigenvectors to {sampling.reconstruction_error:.1e}")

# the slippage weights the sampled poles by their residues
S = slippage([rec for rec in poles if rec.sampled])
print(f"trace row of the slippage: {np.round(np.array([1, 0, 0, 1]) @ S, 6)}")
