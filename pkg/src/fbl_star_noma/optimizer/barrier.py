"""Log-barrier interior-point method for smooth convex programs with an affine
objective:  minimize c @ z  subject to  g_j(z) <= 0.

Problems expose ``constraints(z) -> (g, jac)`` and
``weighted_hessian(z, w) -> sum_j w_j hess g_j(z)``.  Out-of-domain points
must report ``g = +inf`` so the line search steps back.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np
from numpy.typing import NDArray


class BarrierProblem(Protocol):
    n: int

    def constraints(self, z: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]: ...

    def weighted_hessian(self, z: NDArray[np.float64], w: NDArray[np.float64]) -> NDArray[np.float64]: ...


class BarrierError(RuntimeError):
    def __init__(self, message: str, z: NDArray[np.float64] | None = None):
        super().__init__(message)
        self.z = z


@dataclass
class BarrierResult:
    z: NDArray[np.float64]
    t: float
    gap: float
    newton_steps: int
    converged: bool
    stopped_early: bool = False


def _strictly_feasible(g: NDArray[np.float64]) -> bool:
    return bool(np.all(np.isfinite(g)) and np.all(g < 0.0))


def _solve_pd(H: NDArray[np.float64], rhs: NDArray[np.float64]) -> NDArray[np.float64]:
    scale = max(float(np.max(np.abs(np.diag(H)))), 1e-300)
    ridge = 0.0
    eye = np.eye(H.shape[0])
    for _ in range(12):
        try:
            L = np.linalg.cholesky(H + ridge * eye)
        except np.linalg.LinAlgError:
            ridge = max(ridge * 100.0, 1e-12 * scale)
            continue
        y = np.linalg.solve(L, rhs)
        return np.linalg.solve(L.T, y)
    raise np.linalg.LinAlgError("barrier Hessian is not positive definite")


def barrier_minimize(
    problem: BarrierProblem,
    z0: NDArray[np.float64],
    c: NDArray[np.float64],
    *,
    free: NDArray[np.bool_] | None = None,
    t0: float = 1.0,
    mu: float = 10.0,
    gap_tol: float = 1e-8,
    newton_tol: float = 1e-10,
    max_newton: int = 400,
    shrink: float = 0.5,
    armijo: float = 0.01,
    stop_when: Callable[[NDArray[np.float64], NDArray[np.float64]], bool] | None = None,
) -> BarrierResult:
    """Path-following barrier method started from a strictly feasible ``z0``."""
    z = np.array(z0, dtype=float)
    g, jac = problem.constraints(z)
    if not _strictly_feasible(g):
        raise BarrierError("starting point is not strictly feasible", z)
    free_idx = np.arange(problem.n) if free is None else np.flatnonzero(free)
    n_con = g.size
    t = float(t0)
    steps = 0

    def phi(zz: NDArray[np.float64]) -> float:
        gg, _ = problem.constraints(zz)
        if not _strictly_feasible(gg):
            return np.inf
        return t * float(c @ zz) - float(np.sum(np.log(-gg)))

    while True:
        # centering
        while True:
            if steps >= max_newton:
                return BarrierResult(z, t, n_con / t, steps, converged=False)
            g, jac = problem.constraints(z)
            inv = 1.0 / (-g)
            grad = t * c + jac.T @ inv
            Jw = jac * inv[:, None]
            H = problem.weighted_hessian(z, inv) + Jw.T @ Jw
            gf = grad[free_idx]
            Hf = H[np.ix_(free_idx, free_idx)]
            step_f = -_solve_pd(Hf, gf)
            decrement = -float(gf @ step_f)
            steps += 1
            if decrement / 2.0 <= newton_tol:
                break
            dz = np.zeros_like(z)
            dz[free_idx] = step_f
            accepted = False
            if decrement < 0.1:
                # quadratic-convergence region of a self-concordant barrier:
                # the full step is safe and Armijo is below roundoff of phi
                trial = z + dz
                gg, _ = problem.constraints(trial)
                accepted = _strictly_feasible(gg)
            if not accepted:
                phi0 = t * float(c @ z) - float(np.sum(np.log(-g)))
                s = 1.0
                for _ in range(60):
                    trial = z + s * dz
                    val = phi(trial)
                    if np.isfinite(val) and val <= phi0 - armijo * s * decrement:
                        accepted = True
                        break
                    s *= shrink
            if not accepted or np.all(trial == z):
                break  # no representable progress at this t; treat as centred
            z = trial
            if stop_when is not None:
                g_new, _ = problem.constraints(z)
                if stop_when(z, g_new):
                    return BarrierResult(z, t, n_con / t, steps, converged=False, stopped_early=True)
        if n_con / t <= gap_tol:
            return BarrierResult(z, t, n_con / t, steps, converged=True)
        t *= mu


class _PhaseOne:
    """Augmented problem min s  s.t.  g_j(z) <= s (relaxable j), g_k(z) < 0 (hard k), s >= s_floor."""

    def __init__(self, problem: BarrierProblem, relax: NDArray[np.bool_], s_floor: float):
        self.inner = problem
        self.relax = relax
        self.s_floor = s_floor
        self.n = problem.n + 1

    def constraints(self, zs):
        z, s = zs[:-1], zs[-1]
        g, jac = self.inner.constraints(z)
        g = g.copy()
        g[self.relax] -= s
        jac_aug = np.zeros((g.size + 1, self.n))
        jac_aug[:-1, :-1] = jac
        jac_aug[:-1, -1] = np.where(self.relax, -1.0, 0.0)
        jac_aug[-1, -1] = -1.0
        return np.append(g, self.s_floor - s), jac_aug

    def weighted_hessian(self, zs, w):
        H = np.zeros((self.n, self.n))
        H[:-1, :-1] = self.inner.weighted_hessian(zs[:-1], w[:-1])
        return H


def find_strictly_feasible(
    problem: BarrierProblem,
    z0: NDArray[np.float64],
    relax: NDArray[np.bool_],
    *,
    free: NDArray[np.bool_] | None = None,
    margin: float = 1e-7,
    max_newton: int = 400,
) -> tuple[NDArray[np.float64], int]:
    """Phase-I: minimise the largest relaxable violation until it is below ``-margin``.

    Returns ``(z, newton_steps)``; raises :class:`BarrierError` carrying the
    final iterate when no strictly feasible point is found.
    """
    g, _ = problem.constraints(z0)
    if not np.all(np.isfinite(g)) or np.any(g[~relax] >= 0.0):
        raise BarrierError("phase-I start violates a hard (domain) constraint", z0)
    s0 = float(np.max(g[relax])) + 1.0
    s_floor = -1.0
    zs = np.append(z0, s0)
    c = np.zeros(problem.n + 1)
    c[-1] = 1.0
    free_aug = None if free is None else np.append(free, True)
    aug = _PhaseOne(problem, relax, s_floor)

    def done(zz, gg):
        return bool(np.max(gg[:-1][relax] + zz[-1]) < -margin)

    res = barrier_minimize(aug, zs, c, free=free_aug, t0=1.0, mu=20.0, gap_tol=1e-10, max_newton=max_newton, stop_when=done)
    z = res.z[:-1]
    g, _ = problem.constraints(z)
    if _strictly_feasible(g):
        return z, res.newton_steps
    raise BarrierError("no strictly feasible point found", z)
