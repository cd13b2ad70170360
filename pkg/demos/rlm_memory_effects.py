"""Memory effects in the resonant level: Markov guesses against the exact dynamics.

A level coupled to a cold lead at large detuning fills up non-monotonically.
The semigroup of ``K_hat(0)`` cannot show the initial overshoot, while the
time-nonlocal equation with the full kernel follows the exact occupation.

Run with ``python3 demos/rlm_memory_effects.py``.
"""

import numpy as np

from qmefix.evolve import solve_timenonlocal
from qmefix.model_rlm import RlmParams, rlm_kernel_hat, rlm_kernel_split, rlm_propagator
from qmefix.spectral import semigroup_evolution

p = RlmParams(Gamma=1.0, T=0.1 / (2 * np.pi), eps=2 * np.pi)
rho0 = np.diag([1.0, 0.0]).astype(complex)
times = np.linspace(0, 10, 4001)

exact = (rlm_propagator(times, p) @ rho0.ravel())[:, 3].real
markov = (semigroup_evolution(rlm_kernel_hat(0.0, p), times) @ rho0.ravel())[:, 3].real
memory = solve_timenonlocal(rlm_kernel_split(p), rho0, 10.0, len(times)).occupation()

peak = int(np.argmax(exact))
print(f"exact occupation peaks at t = {times[peak]:.3f} with {exact[peak]:.4f}, "
      f"then settles at {exact[-1]:.4f}")
print(f"K_hat(0) semigroup is monotonic: {bool(np.all(np.diff(markov) >= -1e-12))}")
print(f"time-nonlocal solution error: {np.max(np.abs(memory - exact)):.2e}")
for t in (0.25, 0.5, 1.0, 2.0, 5.0):
    i = int(np.searchsorted(times, t))
    print(f"  t = {t:4.2f}  exact {exact[i]:.4f}  K_hat(0) {markov[i]:.4f}  nonlocal {memory[i]:.4f}")
