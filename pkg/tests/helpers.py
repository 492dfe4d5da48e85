"""Shared test fixtures and reference implementations."""

import numpy as np

from inspect_rta.dynamics import (
    AttitudeState,
    DeputyState,
    ResourceState,
    TranslationalState,
)

IDENTITY_Q = np.array([0.0, 0.0, 0.0, 1.0])


def make_state(p=(0, 0, 0), v=(0, 0, 0), q=IDENTITY_Q, w=(0, 0, 0), e=6000.0, t=5.0):
    return DeputyState(
        trans=TranslationalState(p=np.array(p, float), v=np.array(v, float)),
        att=AttitudeState(q=np.array(q, float), omega=np.array(w, float)),
        res=ResourceState(energy=float(e), temperature=float(t)),
    )


def reference_qp_interior_point(h_diag, c, g, h_vec, z0, tol=1e-10):
    """Independent log-barrier interior-point reference for
    min 0.5 z'Hz + c'z  s.t.  Gz >= h, from a strictly feasible z0.

    Damped Newton on t*f(z) - sum log(Gz - h) with geometric t growth and a
    fraction-to-boundary rule.  Written for verification only; never used by
    the solver under test.
    """
    h_diag = np.asarray(h_diag, float)
    c = np.asarray(c, float)
    g = np.atleast_2d(np.asarray(g, float))
    h_vec = np.asarray(h_vec, float)
    z = np.asarray(z0, float).copy()
    m = h_vec.size
    assert np.all(g @ z - h_vec > 0), "reference needs a strictly feasible start"

    def barrier(zz, t):
        s = g @ zz - h_vec
        if np.any(s <= 0):
            return np.inf
        return t * (0.5 * zz @ (h_diag * zz) + c @ zz) - np.sum(np.log(s))

    t = 1.0
    mu = 20.0
    for _outer in range(60):
        for _inner in range(200):
            s = np.maximum(g @ z - h_vec, 1e-150)
            grad = t * (h_diag * z + c) - g.T @ (1.0 / s)
            hess = np.diag(t * h_diag) + (g.T * (1.0 / s**2)) @ g
            try:
                step = np.linalg.solve(hess, -grad)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(hess, -grad, rcond=None)[0]
            decrement = float(-grad @ step)
            if decrement < tol:
                break
            g_step = g @ step
            alpha = 1.0
            neg = g_step < 0
            if np.any(neg):
                alpha = min(1.0, 0.99 * float(np.min(-s[neg] / g_step[neg])))
            f0 = barrier(z, t)
            while alpha > 1e-16 and barrier(z + alpha * step, t) > f0 - 1e-4 * alpha * decrement:
                alpha *= 0.5
            if alpha <= 1e-16:
                break
            z = z + alpha * step
        if m / t < tol:
            break
        t *= mu
    return z


def qp_objective(h_diag, c, z):
    z = np.asarray(z, float)
    return float(0.5 * z @ (np.asarray(h_diag, float) * z) + np.asarray(c, float) @ z)
