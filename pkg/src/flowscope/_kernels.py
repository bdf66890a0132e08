"""Accelerated inner loops for the nonlinear plant and the linear observer.

Both kernels implement the same fixed-step multi-delay RK4 scheme as
:mod:`flowscope.dde` — per-segment cubic-Hermite dense history for the
integrated state, linear interpolation for exogenous node series — written
with explicit loops so they compile under ``numba.njit`` (see
:mod:`flowscope._accel`; the pure-Python fallback runs the identical code).

State layouts:

- plant: ``(x_1..x_N, b, I)`` where ``I`` is the AQM integral state;
- observer (also used as a general linear multi-delay integrator):
  ``(dx_1..dx_N, db, d_hat)`` — with zero gain and a zero measurement it
  integrates the open-loop linear model, with a gain it is the
  output-injection observer, and feeding zero inputs integrates error
  dynamics.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import maybe_njit

__all__ = ["plant_kernel", "observer_kernel"]


@maybe_njit
def plant_kernel(
    hstep,
    nsteps,
    k0,
    dnode,
    eta,
    tp_total,
    dtau_self,
    dtau_b,
    dtau_f,
    c,
    b0,
    bmax,
    p_ref,
    kp,
    ki,
    x_init,
    b_init,
    i_init,
):
    """Nonlinear TCP/queue/AQM closed loop on a uniform grid.

    ``dnode`` samples the anomaly rate at node times (linear interpolation at
    stage times). Delay arguments are the frozen values ``dtau_*``; the RTT in
    the vector field follows the live queue. The AQM output is
    ``clip(p_ref + kp*(b - b0) + ki*I, 0, 1)`` with the integral frozen while
    the unclipped output is outside (0, 1) and frozen entirely when ki == 0.
    History before t=0 is held at the initial state. Returns (states on
    [0, horizon], applied drop probability at node times).
    """
    n_src = eta.shape[0]
    dim = n_src + 2
    n_nodes = k0 + nsteps + 1
    Y = np.zeros((n_nodes, dim))
    D0 = np.zeros((n_nodes - 1, dim))
    D1 = np.zeros((n_nodes - 1, dim))
    for j in range(k0 + 1):
        for i in range(n_src):
            Y[j, i] = x_init[i]
        Y[j, n_src] = b_init
        Y[j, n_src + 1] = i_init
    p_node = np.zeros(nsteps + 1)

    def dval(s):
        if s <= 0.0:
            return dnode[0]
        idx = s / hstep
        j = int(math.floor(idx))
        if j >= nsteps:
            return dnode[nsteps]
        th = idx - j
        return dnode[j] * (1.0 - th) + dnode[j + 1] * th

    def look(s, comp):
        pos = s / hstep + k0
        j = int(math.floor(pos))
        if j < 0:
            j = 0
        if j > n_nodes - 2:
            j = n_nodes - 2
        th = pos - j
        t2 = th * th
        t3 = t2 * th
        h00 = 2.0 * t3 - 3.0 * t2 + 1.0
        h10 = t3 - 2.0 * t2 + th
        h01 = -2.0 * t3 + 3.0 * t2
        h11 = t3 - t2
        return (
            h00 * Y[j, comp]
            + h10 * hstep * D0[j, comp]
            + h01 * Y[j + 1, comp]
            + h11 * hstep * D1[j, comp]
        )

    def rhs(s, state):
        out = np.zeros(dim)
        b = state[n_src]
        integ = state[n_src + 1]
        agg = 0.0
        for jj in range(n_src):
            agg += eta[jj] * look(s - dtau_f[jj], jj)
        for i in range(n_src):
            xi = state[i]
            xd = look(s - dtau_self[i], i)
            bb = look(s - dtau_b[i], n_src)
            ii = look(s - dtau_b[i], n_src + 1)
            p_raw_i = p_ref + kp * (bb - b0) + ki * ii
            p_i = min(max(p_raw_i, 0.0), 1.0)
            tau_i = b / c + tp_total[i]
            xsafe = xi if xi > 1e-9 else 1e-9
            dxi = (
                xd * (1.0 - p_i) / (xsafe * tau_i * tau_i)
                - xd * xi * p_i / 2.0
                + xi / tau_i
                - xi / (tau_i * c) * agg
            )
            if xi <= 0.0 and dxi < 0.0:
                dxi = 0.0
            out[i] = dxi
        db = -c + dval(s) + agg
        if b <= 0.0 and db < 0.0:
            db = 0.0
        if b >= bmax and db > 0.0:
            db = 0.0
        out[n_src] = db
        p_raw_now = p_ref + kp * (b - b0) + ki * integ
        if ki != 0.0 and 0.0 < p_raw_now < 1.0:
            out[n_src + 1] = b - b0
        else:
            out[n_src + 1] = 0.0
        return out

    y = Y[k0].copy()
    p_now = p_ref + kp * (y[n_src] - b0) + ki * y[n_src + 1]
    p_node[0] = min(max(p_now, 0.0), 1.0)
    k1 = rhs(0.0, y)
    for k in range(nsteps):
        t = k * hstep
        seg = k0 + k
        for q in range(dim):
            D0[seg, q] = k1[q]
        k2 = rhs(t + 0.5 * hstep, y + 0.5 * hstep * k1)
        k3 = rhs(t + 0.5 * hstep, y + 0.5 * hstep * k2)
        k4 = rhs(t + hstep, y + hstep * k3)
        y = y + (hstep / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        for i in range(n_src):
            if y[i] < 0.0:
                y[i] = 0.0
        if y[n_src] < 0.0:
            y[n_src] = 0.0
        if y[n_src] > bmax:
            y[n_src] = bmax
        for q in range(dim):
            Y[seg + 1, q] = y[q]
        k1 = rhs(t + hstep, y)
        for q in range(dim):
            D1[seg, q] = k1[q]
        p_now = p_ref + kp * (y[n_src] - b0) + ki * y[n_src + 1]
        p_node[k + 1] = min(max(p_now, 0.0), 1.0)
    return Y[k0:].copy(), p_node


@maybe_njit
def observer_kernel(
    hstep,
    nsteps,
    k0,
    ynode,
    unode,
    a_bar,
    dcol,
    eta,
    evec,
    gain,
    dtau_f,
    xhat0,
):
    """Linear multi-delay system with output injection on a uniform grid.

        dz/dt = A_bar z + sum_i eta_i z_i(t - dtau_f_i) dcol
                + B u(t) + gain (y(t) - z[N])

    ``B u`` adds ``evec[i] * u_i`` to row ``i``. ``ynode``/``unode`` are node
    series (linear interpolation at stage times, end values held). History
    before t=0 is held at ``xhat0``. With ``gain = 0`` this integrates the
    open-loop model; with ``ynode = unode = 0`` it integrates observer error
    dynamics.
    """
    n_src = eta.shape[0]
    dim = a_bar.shape[0]
    n_nodes = k0 + nsteps + 1
    Y = np.zeros((n_nodes, dim))
    D0 = np.zeros((n_nodes - 1, dim))
    D1 = np.zeros((n_nodes - 1, dim))
    for j in range(k0 + 1):
        for q in range(dim):
            Y[j, q] = xhat0[q]

    def sig(arr, s):
        if s <= 0.0:
            return arr[0]
        idx = s / hstep
        j = int(math.floor(idx))
        if j >= nsteps:
            return arr[nsteps]
        th = idx - j
        return arr[j] * (1.0 - th) + arr[j + 1] * th

    def sig2(mat, col, s):
        if s <= 0.0:
            return mat[0, col]
        idx = s / hstep
        j = int(math.floor(idx))
        if j >= nsteps:
            return mat[nsteps, col]
        th = idx - j
        return mat[j, col] * (1.0 - th) + mat[j + 1, col] * th

    def look(s, comp):
        pos = s / hstep + k0
        j = int(math.floor(pos))
        if j < 0:
            j = 0
        if j > n_nodes - 2:
            j = n_nodes - 2
        th = pos - j
        t2 = th * th
        t3 = t2 * th
        h00 = 2.0 * t3 - 3.0 * t2 + 1.0
        h10 = t3 - 2.0 * t2 + th
        h01 = -2.0 * t3 + 3.0 * t2
        h11 = t3 - t2
        return (
            h00 * Y[j, comp]
            + h10 * hstep * D0[j, comp]
            + h01 * Y[j + 1, comp]
            + h11 * hstep * D1[j, comp]
        )

    def rhs(s, z):
        out = np.dot(a_bar, z)
        for i in range(n_src):
            coef = eta[i] * look(s - dtau_f[i], i)
            for q in range(dim):
                out[q] += coef * dcol[q]
            out[i] += evec[i] * sig2(unode, i, s)
        innov = sig(ynode, s) - z[n_src]
        for q in range(dim):
            out[q] += gain[q] * innov
        return out

    y = Y[k0].copy()
    k1 = rhs(0.0, y)
    for k in range(nsteps):
        t = k * hstep
        seg = k0 + k
        for q in range(dim):
            D0[seg, q] = k1[q]
        k2 = rhs(t + 0.5 * hstep, y + 0.5 * hstep * k1)
        k3 = rhs(t + 0.5 * hstep, y + 0.5 * hstep * k2)
        k4 = rhs(t + hstep, y + hstep * k3)
        y = y + (hstep / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        for q in range(dim):
            Y[seg + 1, q] = y[q]
        k1 = rhs(t + hstep, y)
        for q in range(dim):
            D1[seg, q] = k1[q]
    return Y[k0:].copy()
