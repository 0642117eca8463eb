"""Constant-step implicit Runge-Kutta integration (2-stage Radau IIA).

The scheme is third order, L-stable, and stiffly accurate, which suits the
spring-damper chain whose joint dynamics can be very stiff.  Stage equations
are solved by a damped simplified Newton iteration; the iteration matrix uses
the field Jacobian evaluated once at the step start and is refactored every
step.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lu_factor, lu_solve

__all__ = ["RADAU3_A", "RADAU3_B", "RADAU3_C", "IntegrationError", "step_irk3"]

RADAU3_A = np.array([[5.0 / 12.0, -1.0 / 12.0], [3.0 / 4.0, 1.0 / 4.0]])
RADAU3_B = np.array([3.0 / 4.0, 1.0 / 4.0])
RADAU3_C = np.array([1.0 / 3.0, 1.0])


class IntegrationError(RuntimeError):
    """Raised when the stage Newton iteration fails to converge.

    ``time`` carries the absolute time of the failed step when known.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


def _default_jacobian(f, h, x, eps=1e-7):
    dim = h.size
    states = np.repeat(h[None], dim + 1, axis=0)
    states[1:] += np.diag(np.full(dim, eps))
    if _accepts_batch(f):
        xb = None if x is None else np.repeat(np.atleast_2d(x), dim + 1, axis=0)
        vals = f(states, xb)
    else:
        vals = np.stack([f(s, x) for s in states])
    return (vals[1:] - vals[0]).T / eps


def _accepts_batch(f):
    return getattr(f, "batched", True)


def _eval_stages(f, stage_states, xs):
    """Evaluate the field at both stage states, batched when supported."""
    if _accepts_batch(f):
        if xs[0] is None:
            return f(stage_states, None)
        return f(stage_states, np.stack(xs))
    return np.stack([f(stage_states[i], xs[i]) for i in range(2)])


def step_irk3(f, h_k, x_k, dt, jac=None, newton_tol=1e-10, max_iter=50):
    """One Radau IIA step of the ODE ``dh/dt = f(h, x)``.

    Parameters
    ----------
    f : callable
        Vector field ``f(h, x) -> dh/dt``.  Must accept a stacked batch of
        states (leading axis) unless it sets ``f.batched = False``.
    h_k : (d,) state at the step start.
    x_k : input held over the step; may be ``None``, a constant array, or a
        callable ``x_k(tau)`` giving the exact input at stage offset tau.
    dt : step size, > 0.
    jac : optional callable ``jac(h, x) -> (d, d)`` field Jacobian; a
        finite-difference fallback is used when omitted.

    Returns
    -------
    (d,) state at ``t + dt``.

    Raises
    ------
    IntegrationError
        If the damped Newton iteration does not reach the residual tolerance
        within ``max_iter`` iterations.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    h_k = np.asarray(h_k, dtype=float).ravel()
    dim = h_k.size

    if callable(x_k):
        xs = [np.asarray(x_k(c * dt), dtype=float) for c in RADAU3_C]
        x0 = np.asarray(x_k(0.0), dtype=float)
    else:
        x0 = None if x_k is None else np.asarray(x_k, dtype=float)
        xs = [x0, x0]

    jac_fn = jac if jac is not None else (lambda h, x: _default_jacobian(f, h, x))
    j0 = jac_fn(h_k, x0)

    # Newton matrix for the stacked stage system K = f(h + dt A K)
    newton_mat = np.eye(2 * dim) - dt * np.kron(RADAU3_A, j0)
    lu = lu_factor(newton_mat)

    if _accepts_batch(f):
        k0 = f(h_k[None], None if xs[0] is None else xs[0][None])[0]
    else:
        k0 = np.asarray(f(h_k, xs[0]), dtype=float)
    stages = np.stack([k0, k0])

    def residual(k):
        states = h_k[None] + dt * (RADAU3_A @ k)
        return k - _eval_stages(f, states, xs)

    res = residual(stages)
    res_norm = np.abs(res).max()
    converged = res_norm < newton_tol * max(1.0, np.abs(stages).max())
    for _ in range(max_iter):
        if converged:
            break
        if not np.isfinite(res_norm):
            raise IntegrationError("stage residual became non-finite")
        delta = lu_solve(lu, -res.ravel()).reshape(2, dim)
        # damped update: halve until the residual stops growing
        step_size = 1.0
        for _ in range(12):
            trial = stages + step_size * delta
            trial_res = residual(trial)
            trial_norm = np.abs(trial_res).max()
            if trial_norm < res_norm or step_size < 1e-3:
                break
            step_size *= 0.5
        stages, res, res_norm = trial, trial_res, trial_norm
        converged = res_norm < newton_tol * max(1.0, np.abs(stages).max())
    if not converged:
        raise IntegrationError(
            f"stage Newton iteration stalled at residual {res_norm:.3e} "
            f"after {max_iter} iterations"
        )
    return h_k + dt * (RADAU3_B @ stages)
