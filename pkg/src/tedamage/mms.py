"""
Manufactured solutions for the decoupled elasticity and heat problems.

Both use ``w = sin(pi x) sin(pi y)`` on the unit square, which vanishes on
the boundary, so homogeneous Dirichlet data applies.
"""

from __future__ import annotations

import numpy as np

PI = np.pi


def _w(x):
    return np.sin(PI * x[:, 0]) * np.sin(PI * x[:, 1])


def _grad_w(x):
    sx, sy = np.sin(PI * x[:, 0]), np.sin(PI * x[:, 1])
    cx, cy = np.cos(PI * x[:, 0]), np.cos(PI * x[:, 1])
    return PI * np.column_stack([cx * sy, sx * cy])


def elastic_exact(x, t=None):
    """u = w (1, 1)."""
    w = _w(x)
    return np.column_stack([w, w])


def elastic_exact_grad(x, t=None):
    """(P, 2, 2) with entry [i, j] = d u_i / d x_j."""
    g = _grad_w(x)
    return np.stack([g, g], axis=1)


def elastic_force(lam, mu, coeff):
    """Body force with ``-div(coeff A(E(u))) = f`` for the exact displacement."""

    def f(x, t=None):
        w = _w(x)
        cc = np.cos(PI * x[:, 0]) * np.cos(PI * x[:, 1])
        p2 = PI**2
        grad_div = np.column_stack([-p2 * w + p2 * cc, p2 * cc - p2 * w])
        lap = -2.0 * p2 * w
        return -coeff * ((lam + mu) * grad_div + mu * lap[:, None])

    return f


def heat_exact(x, t=None):
    return _w(x)


def heat_exact_grad(x, t=None):
    return _grad_w(x)


def heat_source(K):
    """``gamma = -K lap(theta)`` for the exact temperature."""

    def g(x, t=None):
        return 2.0 * PI**2 * K * _w(x)

    return g
