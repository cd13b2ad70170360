"""Transient generators of the underdamped emitter by iterating in time.

In the underdamped regime the exact generator ``G(t)`` diverges periodically
and has no long-time limit. The time-resolved iteration still converges to it
piece by piece, starting with the earliest times. The solver steps across
each singular time with Gauss collocation.

Run with ``python3 demos/jc_transient_iteration.py``.
"""

import numpy as np

from qmefix.evolve import solve_timelocal
from qmefix.fixedpoint import SuperopTrajectory, transient_iterate
from qmefix.model_jc import JcParams, jc_kernel_hat, jc_kernel_split, jc_pi, singular_times

p = JcParams.from_ratio(13.0, eps=20.0)
t_max, nodes = 1.76, 1000
kernel = jc_kernel_split(p)
g0 = SuperopTrajectory.constant(jc_kernel_hat(0.0, p), t_max, nodes)
# occupations decouple from coherences, so iterate that block alone
iterates, _ = transient_iterate(kernel, g0, 8, block=[0, 3])

excited = np.zeros((2, 2))
excited[1, 1] = 1.0
exact = np.abs(jc_pi(g0.times, p)) ** 2
t_sing = singular_times(p, t_max=t_max)
print("singular times:", ", ".join(f"{t:.4f}" for t in t_sing))
for k, g in enumerate(iterates, start=1):
    occ = solve_timelocal(g, excited, singular_times=t_sing).occupation()
    print(f"iteration {k}: max occupation error {np.max(np.abs(occ - exact)):.3g}")
