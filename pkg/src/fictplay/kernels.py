"""Time-stepping kernels shared by the solvers.

Every kernel exists twice: a loop version compiled with numba and a
vectorized numpy version.  Both evaluate the same floating point expressions
in the same order, so they agree to rounding (and usually bit for bit).
``USE_NUMBA`` picks the default; the ``*_numpy`` / ``*_numba`` names stay
importable for the parity tests and the benchmark.

Grids are flattened: ``plus[a, i]`` / ``minus[a, i]`` hold the flat index of
the neighbor of cell ``i`` along axis ``a``.  The effective diffusion ``nu``
already includes the Lax-Friedrichs viscosity ``theta * h / 2``.
"""

from __future__ import annotations

import numpy as np

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------- numpy path


def _lap_np(v, plus, minus, h):
    out = np.zeros_like(v)
    for a in range(plus.shape[0]):
        out += (v[..., plus[a]] - 2.0 * v) + v[..., minus[a]]
    return out / (h * h)


def _grad_np(v, plus, minus, h):
    return np.stack([(v[..., plus[a]] - v[..., minus[a]]) / (2.0 * h) for a in range(plus.shape[0])], axis=-1)


def hjb_backward_numpy(f_field, g_field, drift, plus, minus, h, dt, nu):
    """``u[k] = u[k+1] + dt (nu lap u[k+1] - H(x, grad u[k+1]) + f[k])``, ``u[K] = g``."""
    K = f_field.shape[0] - 1
    u = np.empty_like(f_field)
    u[K] = g_field
    for k in range(K - 1, -1, -1):
        un = u[k + 1]
        lap = _lap_np(un, plus, minus, h)
        g = _grad_np(un, plus, minus, h)
        ham = np.sum(0.5 * g * g + drift * g, axis=-1)
        u[k] = un + dt * ((nu * lap - ham) + f_field[k])
    return u


def fp_forward_numpy(m0, u, drift, plus, minus, h, dt, nu, source):
    """Forward Lax-Friedrichs finite-volume solve; returns ``(m, w)``.

    ``w[k] = -m[k] (grad u[k+1] + b)`` for ``k < K`` and ``w[K]`` uses ``u[K]``.
    ``source`` is ``(K, N)`` or empty.
    """
    K = u.shape[0] - 1
    n, dim = drift.shape
    m = np.empty_like(u)
    w = np.empty((K + 1, n, dim))
    m[0] = m0
    has_source = source.shape[0] > 0
    for k in range(K):
        a = _grad_np(u[k + 1], plus, minus, h) + drift
        wk = -m[k][:, None] * a
        w[k] = wk
        div = np.zeros(n)
        for ax in range(dim):
            div += (wk[plus[ax], ax] - wk[minus[ax], ax]) / (2.0 * h)
        step = nu * _lap_np(m[k], plus, minus, h) - div
        if has_source:
            step = step + source[k]
        m[k + 1] = m[k] + dt * step
    w[K] = -m[K][:, None] * (_grad_np(u[K], plus, minus, h) + drift)
    return m, w


def bellman_numpy(f_field, g_field, step_cost, targets, dt):
    """Backward dynamic programming over exact cell-to-cell moves.

    ``step_cost[c, i] = dt * L(x_i, v_c)``; ``targets[c, i]`` is the cell
    reached from ``i`` with control ``c``.  Ties go to the lowest control index.
    """
    K = f_field.shape[0] - 1
    n = g_field.shape[0]
    u = np.empty((K + 1, n))
    policy = np.empty((K, n), dtype=np.int64)
    u[K] = g_field
    for k in range(K - 1, -1, -1):
        vals = (step_cost + dt * f_field[k][None, :]) + u[k + 1][targets]
        c = np.argmin(vals, axis=0)
        policy[k] = c
        u[k] = vals[c, np.arange(n)]
    return u, policy


def hjb_residual_numpy(u, f_field, g_field, drift, plus, minus, h, dt, nu):
    """Sup of ``(u[k] - u[k+1])/dt - (nu lap u[k+1] - H + f[k])`` and of ``|u[K] - g|``."""
    un = u[1:]
    g = _grad_np(un, plus, minus, h)
    ham = np.sum(0.5 * g * g + drift * g, axis=-1)
    r = (u[:-1] - un) / dt - ((nu * _lap_np(un, plus, minus, h) - ham) + f_field[:-1])
    return max(float(np.max(np.abs(u[-1] - g_field))), float(np.max(np.abs(r))))


def _div_np(w, plus, minus, h):
    out = np.zeros(w.shape[:-1])
    for ax in range(w.shape[-1]):
        out += (w[..., plus[ax], ax] - w[..., minus[ax], ax]) / (2.0 * h)
    return out


def fp_residual_numpy(u, m, m0, drift, plus, minus, h, dt, nu):
    """Sup of ``(m[k+1] - m[k])/dt - (nu lap m[k] - div w[k])`` with ``w[k] = -m[k] a(u[k+1])``, and of ``|m[0] - m0|``."""
    mk = m[:-1]
    wk = -mk[..., None] * (_grad_np(u[1:], plus, minus, h) + drift)
    r = (m[1:] - mk) / dt - (nu * _lap_np(mk, plus, minus, h) - _div_np(wk, plus, minus, h))
    return max(float(np.max(np.abs(m[0] - m0))), float(np.max(np.abs(r))))


def continuity_defect_numpy(m, w, plus, minus, h, dt, nu):
    """Sup of ``m[k+1] - (m[k] + dt (nu lap m[k] - div w[k]))`` (update form)."""
    mk = m[:-1]
    r = m[1:] - (mk + dt * (nu * _lap_np(mk, plus, minus, h) - _div_np(w[:-1], plus, minus, h)))
    return float(np.max(np.abs(r)))


# ---------------------------------------------------------------- numba path


@njit
def _hjb_backward_loop(f_field, g_field, drift, plus, minus, h, dt, nu):
    K = f_field.shape[0] - 1
    n, dim = drift.shape
    u = np.empty_like(f_field)
    u[K, :] = g_field
    for k in range(K - 1, -1, -1):
        for i in range(n):
            c = u[k + 1, i]
            lap = 0.0
            ham = 0.0
            for a in range(dim):
                up = u[k + 1, plus[a, i]]
                um = u[k + 1, minus[a, i]]
                lap += (up - 2.0 * c) + um
                g = (up - um) / (2.0 * h)
                ham += 0.5 * g * g + drift[i, a] * g
            u[k, i] = c + dt * ((nu * (lap / (h * h)) - ham) + f_field[k, i])
    return u


@njit
def _fp_forward_loop(m0, u, drift, plus, minus, h, dt, nu, source):
    K = u.shape[0] - 1
    n, dim = drift.shape
    m = np.empty_like(u)
    w = np.empty((K + 1, n, dim))
    m[0, :] = m0
    has_source = source.shape[0] > 0
    for k in range(K + 1):
        for i in range(n):
            for a in range(dim):
                g = (u[min(k + 1, K), plus[a, i]] - u[min(k + 1, K), minus[a, i]]) / (2.0 * h)
                w[k, i, a] = -m[k, i] * (g + drift[i, a])
        if k == K:
            break
        for i in range(n):
            c = m[k, i]
            lap = 0.0
            div = 0.0
            for a in range(dim):
                lap += (m[k, plus[a, i]] - 2.0 * c) + m[k, minus[a, i]]
                div += (w[k, plus[a, i], a] - w[k, minus[a, i], a]) / (2.0 * h)
            step = nu * (lap / (h * h)) - div
            if has_source:
                step = step + source[k, i]
            m[k + 1, i] = c + dt * step
    return m, w


@njit
def _bellman_loop(f_field, g_field, step_cost, targets, dt):
    K = f_field.shape[0] - 1
    n = g_field.shape[0]
    n_controls = step_cost.shape[0]
    u = np.empty((K + 1, n))
    policy = np.empty((K, n), dtype=np.int64)
    u[K, :] = g_field
    for k in range(K - 1, -1, -1):
        for i in range(n):
            best = np.inf
            arg = 0
            df = dt * f_field[k, i]
            for c in range(n_controls):
                v = (step_cost[c, i] + df) + u[k + 1, targets[c, i]]
                if v < best:
                    best = v
                    arg = c
            u[k, i] = best
            policy[k, i] = arg
    return u, policy


@njit
def _hjb_residual_loop(u, f_field, g_field, drift, plus, minus, h, dt, nu):
    K = u.shape[0] - 1
    n, dim = drift.shape
    worst = 0.0
    for i in range(n):
        worst = max(worst, abs(u[K, i] - g_field[i]))
    for k in range(K):
        for i in range(n):
            c = u[k + 1, i]
            lap = 0.0
            ham = 0.0
            for a in range(dim):
                up = u[k + 1, plus[a, i]]
                um = u[k + 1, minus[a, i]]
                lap += (up - 2.0 * c) + um
                g = (up - um) / (2.0 * h)
                ham += 0.5 * g * g + drift[i, a] * g
            r = (u[k, i] - c) / dt - ((nu * (lap / (h * h)) - ham) + f_field[k, i])
            worst = max(worst, abs(r))
    return worst


@njit
def _fp_residual_loop(u, m, m0, drift, plus, minus, h, dt, nu):
    K = u.shape[0] - 1
    n, dim = drift.shape
    worst = 0.0
    for i in range(n):
        worst = max(worst, abs(m[0, i] - m0[i]))
    for k in range(K):
        for i in range(n):
            c = m[k, i]
            lap = 0.0
            div = 0.0
            for a in range(dim):
                ip = plus[a, i]
                im = minus[a, i]
                gp = (u[k + 1, plus[a, ip]] - u[k + 1, minus[a, ip]]) / (2.0 * h)
                gm = (u[k + 1, plus[a, im]] - u[k + 1, minus[a, im]]) / (2.0 * h)
                wp = -m[k, ip] * (gp + drift[ip, a])
                wm = -m[k, im] * (gm + drift[im, a])
                lap += (m[k, ip] - 2.0 * c) + m[k, im]
                div += (wp - wm) / (2.0 * h)
            r = (m[k + 1, i] - c) / dt - (nu * (lap / (h * h)) - div)
            worst = max(worst, abs(r))
    return worst


@njit
def _continuity_loop(m, w, plus, minus, h, dt, nu):
    K = m.shape[0] - 1
    n = m.shape[1]
    dim = w.shape[2]
    worst = 0.0
    for k in range(K):
        for i in range(n):
            c = m[k, i]
            lap = 0.0
            div = 0.0
            for a in range(dim):
                lap += (m[k, plus[a, i]] - 2.0 * c) + m[k, minus[a, i]]
                div += (w[k, plus[a, i], a] - w[k, minus[a, i], a]) / (2.0 * h)
            r = m[k + 1, i] - (c + dt * (nu * (lap / (h * h)) - div))
            worst = max(worst, abs(r))
    return worst


def hjb_backward_numba(f_field, g_field, drift, plus, minus, h, dt, nu):
    return _hjb_backward_loop(f_field, g_field, drift, plus, minus, float(h), float(dt), float(nu))


def fp_forward_numba(m0, u, drift, plus, minus, h, dt, nu, source):
    return _fp_forward_loop(m0, u, drift, plus, minus, float(h), float(dt), float(nu), source)


def bellman_numba(f_field, g_field, step_cost, targets, dt):
    return _bellman_loop(f_field, g_field, step_cost, targets, float(dt))


# ---------------------------------------------------------------- dispatch


def _prep(*arrays):
    return [np.ascontiguousarray(a) for a in arrays]


def hjb_backward(f_field, g_field, drift, plus, minus, h, dt, nu, use_numba=None):
    f_field, g_field, drift = _prep(np.asarray(f_field, float), np.asarray(g_field, float), np.asarray(drift, float))
    fn = hjb_backward_numba if (USE_NUMBA if use_numba is None else use_numba) else hjb_backward_numpy
    return fn(f_field, g_field, drift, plus, minus, h, dt, nu)


def fp_forward(m0, u, drift, plus, minus, h, dt, nu, source=None, use_numba=None):
    if source is None:
        source = np.zeros((0, u.shape[1]))
    m0, u, drift, source = _prep(np.asarray(m0, float), np.asarray(u, float), np.asarray(drift, float), np.asarray(source, float))
    fn = fp_forward_numba if (USE_NUMBA if use_numba is None else use_numba) else fp_forward_numpy
    return fn(m0, u, drift, plus, minus, h, dt, nu, source)


def bellman(f_field, g_field, step_cost, targets, dt, use_numba=None):
    f_field, g_field, step_cost = _prep(np.asarray(f_field, float), np.asarray(g_field, float), np.asarray(step_cost, float))
    targets = np.ascontiguousarray(targets, dtype=np.int64)
    fn = bellman_numba if (USE_NUMBA if use_numba is None else use_numba) else bellman_numpy
    return fn(f_field, g_field, step_cost, targets, dt)


def _pick(numba_fn, numpy_fn, use_numba):
    return numba_fn if (USE_NUMBA if use_numba is None else use_numba) else numpy_fn


def hjb_residual(u, f_field, g_field, drift, plus, minus, h, dt, nu, use_numba=None):
    args = _prep(np.asarray(u, float), np.asarray(f_field, float), np.asarray(g_field, float), np.asarray(drift, float))
    fn = _pick(_hjb_residual_loop, hjb_residual_numpy, use_numba)
    return float(fn(*args, plus, minus, float(h), float(dt), float(nu)))


def fp_residual(u, m, m0, drift, plus, minus, h, dt, nu, use_numba=None):
    args = _prep(np.asarray(u, float), np.asarray(m, float), np.asarray(m0, float), np.asarray(drift, float))
    fn = _pick(_fp_residual_loop, fp_residual_numpy, use_numba)
    return float(fn(*args, plus, minus, float(h), float(dt), float(nu)))


def continuity_defect(m, w, plus, minus, h, dt, nu, use_numba=None):
    args = _prep(np.asarray(m, float), np.asarray(w, float))
    fn = _pick(_continuity_loop, continuity_defect_numpy, use_numba)
    return float(fn(*args, plus, minus, float(h), float(dt), float(nu)))
