"""Small-signal models of the fluid TCP/queue dynamics around an operating point.

The nonlinear model (per source aggregate ``i``, queue ``b``):

    dx_i/dt = x_i(t-tau_i) (1 - p_i(t-tau_b_i)) / (x_i(t) tau_i(t)^2)
              - x_i(t-tau_i) x_i(t) p_i(t-tau_b_i) / 2
              + x_i(t)/tau_i(t)
              - x_i(t) / (tau_i(t) c) * sum_j eta_j x_j(t-tau_f_j)
    db/dt   = -c + d(t) + sum_j eta_j x_j(t-tau_f_j)

with the algebraic round-trip time ``tau_i(t) = b(t)/c + tp_f_i + tp_b_i``.
Delay *arguments* are frozen at their operating-point values; the RTT stays
state-dependent inside the vector field.

Around an operating point the deviations ``(dx, db)`` obey

    d(dx)/dt = A dx(t) + sum_j A_dj dx(t - tau_f_j) + B u(t),    y = C dx(t),

where ``u_i(t) = dp(t - tau_b_i)`` is the backward-delayed drop-probability
deviation, ``A = diag(a)`` bordered by the queue-coupling column ``h``,
``A_dj`` is nonzero only in column ``j`` (the forward-delayed rate of source
``j`` enters every rate equation and the queue), and ``B = diag(e)``:

    a_i = -(1 - p_i0)/(x_i0 tau_i0^2) - x_i0 p_i0 / 2
    h_i = -2 (1 - p_i0) / (c tau_i0^3)
    f_i = -x_i0 / (tau_i0 c)
    e_i = -1/tau_i0^2 - x_i0^2/2

:func:`augment` appends the unknown extra arrival rate ``d`` as a constant
state driving the queue, giving the design model for observer synthesis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .topology import Equilibrium, NetworkConfig

__all__ = [
    "LinearModel",
    "AugmentedModel",
    "rhs_nonlinear",
    "linearize",
    "augment",
    "fd_jacobian",
]


def rhs_nonlinear(
    cfg: NetworkConfig,
    x_now: np.ndarray,
    x_selfdel: np.ndarray,
    x_fwd: np.ndarray,
    b: float,
    p_del: np.ndarray,
    d: float = 0.0,
) -> tuple[np.ndarray, float]:
    """Frozen-history vector field: each delayed channel is an explicit argument.

    ``x_now`` is x(t), ``x_selfdel`` is x(t-tau_i) (own-RTT delay),
    ``x_fwd`` is x(t-tau_f_j) (forward delay), ``p_del`` is p(t-tau_b_i).
    Returns (dx/dt, db/dt). Reference implementation shared by the
    finite-difference oracle and the kernel consistency tests.
    """
    c = cfg.capacity
    eta = cfg.eta()
    tau = b / c + cfg.tp_f() + cfg.tp_b()
    agg = float(np.dot(eta, x_fwd))
    dx = (
        x_selfdel * (1.0 - p_del) / (x_now * tau**2)
        - x_selfdel * x_now * p_del / 2.0
        + x_now / tau
        - x_now / (tau * c) * agg
    )
    db = -c + d + agg
    return dx, float(db)


@dataclass(frozen=True)
class LinearModel:
    """Deviation model ``d(dx)/dt = A dx + sum_j A_dj dx(t-tau_f_j) + B u``.

    ``A_d`` is the sum of the per-delay terms (``A_dj`` = column ``j`` of
    ``A_d``, other columns zero); it is the matrix acting on the delayed state
    when all forward delays coincide.
    """

    a: np.ndarray
    h: np.ndarray
    f: np.ndarray
    e: np.ndarray
    A: np.ndarray
    A_d: np.ndarray
    B: np.ndarray
    C: np.ndarray
    tau_f: np.ndarray
    tau_b: np.ndarray
    eta: np.ndarray

    @property
    def n_sources(self) -> int:
        return self.a.shape[0]

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    def A_d_column(self, j: int) -> np.ndarray:
        """Per-delay matrix ``A_dj`` (nonzero only in column ``j``)."""
        out = np.zeros_like(self.A_d)
        out[:, j] = self.A_d[:, j]
        return out


@dataclass(frozen=True)
class AugmentedModel:
    """Design model with the anomaly rate appended as a constant state.

    State ``(dx_1..dx_N, db, d)``; ``A_bar_d[i]`` is nonzero only in column
    ``i`` (forward-delayed rate of source ``i``); the measurement is the queue
    deviation.
    """

    A_bar: np.ndarray
    A_bar_d: tuple[np.ndarray, ...]
    B_bar: np.ndarray
    C_bar: np.ndarray
    tau_f: np.ndarray
    tau_b: np.ndarray
    eta: np.ndarray
    e: np.ndarray
    f: np.ndarray

    @property
    def n(self) -> int:
        return self.A_bar.shape[0]

    @property
    def n_sources(self) -> int:
        return self.tau_f.shape[0]

    def delay_column(self) -> np.ndarray:
        """Shared column pattern of the delayed terms: [f_1..f_N, 1, 0]."""
        return np.concatenate([self.f, [1.0, 0.0]])


def linearize(eq: Equilibrium, cfg: NetworkConfig) -> LinearModel:
    """Analytic small-signal model at an operating point (closure not assumed)."""
    c = cfg.capacity
    eta = cfg.eta()
    x0, p0, tau0 = eq.x0, eq.p0, eq.tau0
    n = x0.shape[0]

    a = -(1.0 - p0) / (x0 * tau0**2) - x0 * p0 / 2.0
    h = -2.0 * (1.0 - p0) / (c * tau0**3)
    f = -x0 / (tau0 * c)
    e = -1.0 / tau0**2 - x0**2 / 2.0

    A = np.zeros((n + 1, n + 1))
    A[:n, :n] = np.diag(a)
    A[:n, n] = h
    A_d = np.zeros((n + 1, n + 1))
    A_d[:n, :n] = np.outer(f, eta)
    A_d[n, :n] = eta
    B = np.zeros((n + 1, n))
    B[:n, :] = np.diag(e)
    C = np.zeros((1, n + 1))
    C[0, n] = 1.0
    return LinearModel(
        a=a,
        h=h,
        f=f,
        e=e,
        A=A,
        A_d=A_d,
        B=B,
        C=C,
        tau_f=eq.tau_f.copy(),
        tau_b=eq.tau_b.copy(),
        eta=eta,
    )


def augment(lin: LinearModel) -> AugmentedModel:
    """Append the anomaly state and check observability of the delay-free aggregate.

    Raises ``ValueError`` if the observability matrix of
    ``(A_bar + sum_i A_bar_di, C_bar)`` is rank deficient — the anomaly state
    would then not be reconstructible from the queue measurement.
    """
    n_src = lin.n_sources
    n = n_src + 2
    A_bar = np.zeros((n, n))
    A_bar[: n_src + 1, : n_src + 1] = lin.A
    A_bar[n_src, n_src + 1] = 1.0  # anomaly rate feeds the queue

    col = np.concatenate([lin.f, [1.0, 0.0]])
    A_bar_d = []
    for i in range(n_src):
        M = np.zeros((n, n))
        M[:, i] = lin.eta[i] * col
        A_bar_d.append(M)

    B_bar = np.zeros((n, n_src))
    B_bar[: n_src + 1, :] = lin.B
    C_bar = np.zeros((1, n))
    C_bar[0, n_src] = 1.0

    A_sum = A_bar + sum(A_bar_d)
    obs = np.vstack([C_bar @ np.linalg.matrix_power(A_sum, k) for k in range(n)])
    rank = np.linalg.matrix_rank(obs)
    if rank < n:
        raise ValueError(
            f"augmented model unobservable from the queue measurement: "
            f"observability rank {rank} < {n}"
        )
    return AugmentedModel(
        A_bar=A_bar,
        A_bar_d=tuple(A_bar_d),
        B_bar=B_bar,
        C_bar=C_bar,
        tau_f=lin.tau_f.copy(),
        tau_b=lin.tau_b.copy(),
        eta=lin.eta.copy(),
        e=lin.e.copy(),
        f=lin.f.copy(),
    )


def fd_jacobian(
    cfg: NetworkConfig, eq: Equilibrium, h_step: float = 1e-5
) -> tuple[np.ndarray, np.ndarray]:
    """Central finite differences of the nonlinear vector field at the operating point.

    Returns ``(A_fd, A_d_fd)`` in the same layout as :class:`LinearModel`:
    ``A_fd`` differentiates with respect to the current state ``(x(t), b)``;
    column ``j`` of ``A_d_fd`` aggregates every delayed appearance of ``x_j``
    (own-RTT and forward channels perturbed together). At a stationary closure
    point the own-RTT contribution cancels, so ``A_d_fd`` matches the analytic
    forward-delay structure.
    """
    n = eq.n_sources
    x0, b0, p0 = eq.x0, eq.b0, eq.p0

    def rhs_vec(x_now, x_del, b):
        dx, db = rhs_nonlinear(cfg, x_now, x_del, x_del, b, p0)
        return np.concatenate([dx, [db]])

    A_fd = np.zeros((n + 1, n + 1))
    A_d_fd = np.zeros((n + 1, n + 1))
    for j in range(n):
        step = h_step * max(1.0, abs(x0[j]))
        dxp, dxm = x0.copy(), x0.copy()
        dxp[j] += step
        dxm[j] -= step
        A_fd[:, j] = (rhs_vec(dxp, x0, b0) - rhs_vec(dxm, x0, b0)) / (2 * step)
        A_d_fd[:, j] = (rhs_vec(x0, dxp, b0) - rhs_vec(x0, dxm, b0)) / (2 * step)
    step = h_step * max(1.0, abs(b0))
    A_fd[:, n] = (rhs_vec(x0, x0, b0 + step) - rhs_vec(x0, x0, b0 - step)) / (2 * step)
    # the queue state never appears delayed
    return A_fd, A_d_fd
