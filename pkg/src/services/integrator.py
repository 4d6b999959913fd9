"""
Classical fourth-order Runge-Kutta stepping shared by the envelope and Maxwell evolutions
"""
from typing import Callable

import numpy as np
from numpy.typing import NDArray

# Largest |dt * lambda| on the imaginary axis inside the RK4 stability region
RK4_IMAGINARY_LIMIT = 2.0 * np.sqrt(2.0)


def rk4_step(rhs: Callable[[NDArray], NDArray], y: NDArray, dt: float) -> NDArray:
    """One autonomous RK4 step of dy/dt = rhs(y)."""
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * dt * k1)
    k3 = rhs(y + 0.5 * dt * k2)
    k4 = rhs(y + dt * k3)
    return y + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def is_finite(y: NDArray, limit: float = 1e150) -> bool:
    return bool(np.all(np.isfinite(y)) and np.max(np.abs(y), initial=0.0) < limit)
