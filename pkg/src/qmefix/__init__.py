"""Memory kernels and time-local generators of open quantum systems.

Converts between the memory kernel of the time-nonlocal master equation and
the generator of the time-local one through the fixed-point relation
``G = K_hat[G]``, with two exactly solvable reference models.
"""

__version__ = "0.1.0"
