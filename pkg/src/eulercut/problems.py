"""Built-in moving-domain problems with closed-form solutions.

The kite problem transports the disk of radius 1/2 with the shear flow
w = (1/6 - 5/3 y^2, 0). Along the flow u = cos(pi |z| / R), with
z = (x - w1(y) t, y), is constant, so the source reduces to -nu * Laplace(u).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


def _shear(y):
    return 1.0 / 6.0 - 5.0 / 3.0 * y ** 2


@dataclass
class Problem:
    name: str
    levelset: Callable                  # (x, y, t)
    exact: Callable | None              # (x, y, t)
    exact_grad: Callable | None         # (x, y, t) -> (n, 2)
    source: Callable | None             # (x, y, t)
    velocity: Callable | None           # (x, y, t) -> (n, 2)
    div_velocity: Callable | None
    nu: float = 1.0
    T: float = 1.0
    bounds: tuple = (-1.0, -1.0, 1.0, 1.0)
    manufactured: bool = True           # exact is a solution (otherwise only initial data)

    def velocity_sup(self, points: np.ndarray, times) -> float:
        if self.velocity is None:
            return 0.0
        return max(float(np.linalg.norm(self.velocity(points[:, 0], points[:, 1], t), axis=1).max())
                   for t in times)

    def div_sup(self, points: np.ndarray, times) -> float:
        if self.div_velocity is None:
            return 0.0
        return max(float(np.abs(np.broadcast_to(self.div_velocity(points[:, 0], points[:, 1], t),
                                                (len(points),))).max()) for t in times)


class _TransportedCosine:
    """u = cos(c |z|), z = (x - s(y) t, y), with the derivatives of the shear shift s."""

    def __init__(self, radius=0.5, nu=1.0, moving=True):
        self.c = np.pi / radius
        self.nu = nu
        self.moving = moving

    def _z(self, x, y, t):
        t = t if self.moving else 0.0
        z1 = x - _shear(y) * t
        a = 10.0 / 3.0 * y * t          # d z1 / dy
        b = 10.0 / 3.0 * t              # d^2 z1 / dy^2
        return z1, np.asarray(y, dtype=float) + 0.0 * z1, a + 0.0 * z1, b

    def value(self, x, y, t):
        z1, z2, _, _ = self._z(x, y, t)
        return np.cos(self.c * np.hypot(z1, z2))

    def grad(self, x, y, t):
        z1, z2, a, _ = self._z(x, y, t)
        s = np.hypot(z1, z2)
        up_over_s = -self.c ** 2 * np.sinc(self.c * s / np.pi)      # U'(s) / s, smooth at 0
        return np.stack([up_over_s * z1, up_over_s * (a * z1 + z2)], axis=-1)

    def laplacian(self, x, y, t):
        z1, z2, a, b = self._z(x, y, t)
        s = np.hypot(z1, z2)
        c = self.c
        sinc = np.sinc(c * s / np.pi)
        up_over_s = -c ** 2 * sinc
        P, Q = z1, a * z1 + z2
        safe = np.where(s > 0, s, 1.0)
        grad_s_sq = np.where(s > 0, (P ** 2 + Q ** 2) / safe ** 2, 0.0)
        return grad_s_sq * c ** 2 * (sinc - np.cos(c * s)) + up_over_s * (2.0 + a ** 2 + b * z1)

    def source(self, x, y, t):
        return -self.nu * self.laplacian(x, y, t)


def kite(nu: float = 1.0, with_source: bool = True) -> Problem:
    sol = _TransportedCosine(0.5, nu)

    def phi(x, y, t):
        return np.hypot(x - _shear(y) * t, y) - 0.5

    def vel(x, y, t):
        x = np.asarray(x, dtype=float)
        return np.stack([_shear(y) + 0.0 * x, np.zeros_like(x)], axis=-1)

    def div(x, y, t):
        return np.zeros_like(np.asarray(x, dtype=float))

    return Problem("KITE" if with_source else "KITE_G0", phi, sol.value, sol.grad,
                   sol.source if with_source else None, vel, div, nu, manufactured=with_source)


def circle_static(nu: float = 1.0, radius: float = 0.5, center=(0.0, 0.0)) -> Problem:
    sol = _TransportedCosine(radius, nu, moving=False)
    cx, cy = center

    def phi(x, y, t=0.0):
        return np.hypot(x - cx, y - cy) - radius

    def value(x, y, t):
        return sol.value(x - cx, y - cy, t)

    def grad(x, y, t):
        return sol.grad(x - cx, y - cy, t)

    def source(x, y, t):
        return sol.source(x - cx, y - cy, t)

    return Problem("CIRCLE_STATIC", phi, value, grad, source, None, None, nu)


REGISTRY = {
    "KITE": kite,
    "KITE_G0": lambda nu=1.0: kite(nu, with_source=False),
    "CIRCLE_STATIC": circle_static,
}


def get_problem(name: str, nu: float = 1.0) -> Problem:
    try:
        return REGISTRY[name.upper()](nu=nu)
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; available: {', '.join(REGISTRY)}") from None


def check_source(problem: Problem, n_points: int = 100, step: float = 1e-5, rtol: float = 1e-6,
                 seed: int = 0) -> float:
    """Compare the closed-form source with central differences of the exact solution.

    Returns the relative deviation; raises ValueError above ``rtol``.
    """
    if problem.exact is None or problem.source is None:
        return 0.0
    rng = np.random.default_rng(seed)
    xmin, ymin, xmax, ymax = problem.bounds
    x = rng.uniform(xmin, xmax, n_points)
    y = rng.uniform(ymin, ymax, n_points)
    t = rng.uniform(0.0, problem.T, n_points)
    u = problem.exact
    e = step
    ut = (u(x, y, t + e) - u(x, y, t - e)) / (2 * e)
    ux = (u(x + e, y, t) - u(x - e, y, t)) / (2 * e)
    uy = (u(x, y + e, t) - u(x, y - e, t)) / (2 * e)
    # fourth-order stencil with a larger step keeps rounding below the tolerance
    E = 100 * e

    def d2(fp2, fp1, f0, fm1, fm2):
        return (-fp2 + 16 * fp1 - 30 * f0 + 16 * fm1 - fm2) / (12 * E ** 2)

    u0 = u(x, y, t)
    lap = (d2(u(x + 2 * E, y, t), u(x + E, y, t), u0, u(x - E, y, t), u(x - 2 * E, y, t))
           + d2(u(x, y + 2 * E, t), u(x, y + E, t), u0, u(x, y - E, t), u(x, y - 2 * E, t)))
    conv = 0.0
    if problem.velocity is not None:
        w = problem.velocity(x, y, t)
        conv = w[:, 0] * ux + w[:, 1] * uy + problem.div_velocity(x, y, t) * u(x, y, t)
    g_fd = ut + conv - problem.nu * lap
    g = problem.source(x, y, t)
    scale = max(float(np.abs(g).max()), 1.0)
    dev = float(np.abs(g_fd - g).max() / scale)
    if dev > rtol:
        raise ValueError(f"manufactured source disagrees with finite differences: {dev:.3e}")
    return dev


def check_neumann(problem: Problem, n_points: int = 64, atol: float = 1e-10) -> float:
    """Largest normal derivative of the exact solution on the zero level set.

    Points on the interface are found by bisection along rays from the
    domain centre at t = 0 and t = T.
    """
    if problem.exact_grad is None:
        return 0.0
    worst = 0.0
    angles = np.linspace(0.0, 2 * np.pi, n_points, endpoint=False)
    for t in (0.0, problem.T):
        ts = np.full(n_points, t)
        c = np.array([_shear(0.0) * t if problem.name.startswith("KITE") else 0.0, 0.0])
        d = np.column_stack([np.cos(angles), np.sin(angles)])
        lo, hi = np.zeros(n_points), np.full(n_points, 2.0)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            p = c + mid[:, None] * d
            inside = problem.levelset(p[:, 0], p[:, 1], ts) < 0
            lo, hi = np.where(inside, mid, lo), np.where(inside, hi, mid)
        p = c + lo[:, None] * d
        e = 1e-6
        gx = (problem.levelset(p[:, 0] + e, p[:, 1], ts) - problem.levelset(p[:, 0] - e, p[:, 1], ts)) / (2 * e)
        gy = (problem.levelset(p[:, 0], p[:, 1] + e, ts) - problem.levelset(p[:, 0], p[:, 1] - e, ts)) / (2 * e)
        n = np.column_stack([gx, gy])
        n /= np.linalg.norm(n, axis=1)[:, None]
        dn = np.abs(np.einsum("na,na->n", problem.exact_grad(p[:, 0], p[:, 1], ts), n))
        worst = max(worst, float(dn.max()))
    if worst > atol:
        raise ValueError(f"exact solution violates the Neumann condition: {worst:.3e}")
    return worst
