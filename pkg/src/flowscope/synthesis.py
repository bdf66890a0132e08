"""Delay-dependent observer-gain synthesis via semidefinite programming.

For the augmented model with distinct forward delays ``tau_f_i`` the gain
``L`` of the output-injection observer is certified by a Lyapunov–Krasovskii
feasibility problem in matrix variables ``P, Q_1..Q_N, S_1..S_N`` (symmetric
``n x n``, ``n = N + 2``) and ``X`` (``n x 1``):

    block([
      [Psi + sum_i (2P - S_i),  -P Ad_1 - (2P - S_1), ...,  Y w_1, ...],
      [  *,                      Q_1 + (2P - S_1),    ...,  tail ],
      ...,
      [  *,  ...,                                     diag(S_k / w_k^2) ],
    ]) >= eps I,   P, Q_i, S_i >= eps I,

    Psi = -P A - A' P + X C + C' X' - sum_i Q_i,
    Y   = [(P A - X C)', (P Ad_1)', ..., (P Ad_N)']  (column blocks),

where ``A = A_bar``, ``Ad_i = A_bar_d[i]``, ``C = C_bar``. The feasible gain
is ``L = P^{-1} X``. The condition certifies asymptotic error decay for the
delayed error dynamics; it is sufficient only, so infeasibility for a *fixed*
gain (``verify_gain``) is inconclusive rather than a proof of instability.

Conditioning (both steps are congruences of the feasible set — they change
solver numerics, never feasibility):

- tail scaling by ``w_k = tau_f_k``: the ``(1/tau_f_k^2) S_k`` diagonal tails
  become ``S_k`` and the off-diagonal column blocks pick up ``tau_f_k``.
  Because every ``tau_f_k < 1`` in this problem family, a solved margin of
  ``eps`` on the scaled form implies at least ``eps`` on the literal form.
- optional diagonal state scaling ``D`` (queue and anomaly states carry
  1e2–1e3 magnitudes; rates are O(10)); the certificate is mapped back as
  ``P -> D P D``, ``X -> D X`` (``L`` invariant) and the solved margin is
  inflated by ``1/min(D)^2`` so the mapped-back certificate still clears the
  reported ``eps`` on the literal form.

``check_certificate`` therefore always re-assembles the *literal* form with
plain numpy from the returned certificate and checks all minimum eigenvalues
against ``eps/2``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np

from .linearize import AugmentedModel

__all__ = [
    "SynthesisOptions",
    "SynthesisResult",
    "CertificateReport",
    "LMIProblem",
    "assemble_lmi",
    "evaluate_block",
    "synthesize_gain",
    "verify_gain",
    "check_certificate",
    "export_triplets",
    "scale_metric",
    "default_eps",
]

_FEASIBLE = "feasible"
_INFEASIBLE = "infeasible"
_NUMERICAL = "numerical_failure"


@dataclass(frozen=True)
class SynthesisOptions:
    """Knobs for the SDP solve.

    ``eps`` is the reported strictness margin (``None`` → ``default_eps``).
    ``decay_rate`` adds a delay-free output-injection decay cut
    ``-(A+sum Ad)'P - P(A+sum Ad) + C'X' + X C >= 2*decay_rate*P`` (joint with
    the delay-dependent block; coordinate-invariant), which trades feasibility
    margin for faster dominant error modes. ``minimize_trace`` switches the
    feasibility objective to trace(P) minimization for certificate
    conditioning.
    """

    eps: float | None = None
    scale_states: bool = True
    decay_rate: float | None = None
    minimize_trace: bool = False
    solver: str = "CLARABEL"
    allow_fallback: bool = True
    solver_opts: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SynthesisResult:
    """Outcome of a synthesis or fixed-gain verification solve.

    The certificate ``(P, Qs, Ss, X)`` is reported in original model
    coordinates; ``min_eig_block`` is the smallest eigenvalue of the literal
    block re-assembled from it. ``status`` separates proven infeasibility
    from solver/numerical failure.
    """

    status: str
    L: np.ndarray | None
    P: np.ndarray | None
    Qs: tuple[np.ndarray, ...] | None
    Ss: tuple[np.ndarray, ...] | None
    X: np.ndarray | None
    eps: float
    min_eig_block: float | None
    solver_name: str
    solver_status: str
    options: SynthesisOptions

    @property
    def feasible(self) -> bool:
        return self.status == _FEASIBLE


@dataclass(frozen=True)
class CertificateReport:
    """A-posteriori eigenvalue audit of a synthesis certificate."""

    ok: bool
    min_eig_P: float
    min_eig_Q: float
    min_eig_S: float
    min_eig_block: float
    gain_residual: float
    eps: float
    messages: tuple[str, ...]


@dataclass
class LMIProblem:
    """Assembled cvxpy feasibility problem (solver coordinates)."""

    P: object
    Qs: list
    Ss: list
    X: object
    block: object
    constraints: list
    n: int
    n_sources: int
    eps: float
    eps_solve: float
    scale_vec: np.ndarray
    A_s: np.ndarray
    Ads_s: np.ndarray
    C_s: np.ndarray
    tau_f: np.ndarray

    def problem(self, objective=None):
        import cvxpy as cp

        return cp.Problem(objective if objective is not None else cp.Minimize(0), self.constraints)


def scale_metric(aug: AugmentedModel) -> float:
    """Magnitude scale of the model matrices (Frobenius norms)."""
    norms = [np.linalg.norm(aug.A_bar)] + [np.linalg.norm(M) for M in aug.A_bar_d]
    return float(max(1.0, max(norms)))


def default_eps(aug: AugmentedModel) -> float:
    """Default strictness margin: 1e-7 times the model's magnitude scale."""
    return 1e-7 * scale_metric(aug)


def _block_rows(A, Ads, C, tau_f, P, Qs, Ss, X, weighted: bool):
    """Entry grid of the LMI block; works for cvxpy expressions and ndarrays.

    ``weighted=True`` builds the tail-scaled (solver) form, ``False`` the
    literal form with ``(1/tau_f_k^2) S_k`` tails.
    """
    n_src = len(Ads)
    n = A.shape[0]
    nb = 2 * n_src + 1
    Psi = -P @ A - A.T @ P + X @ C + C.T @ X.T - sum(Qs)
    Ytop = (P @ A - X @ C).T
    zero = np.zeros((n, n))
    rows = [[None] * nb for _ in range(nb)]
    rows[0][0] = Psi + sum(2 * P - S for S in Ss)
    for i in range(n_src):
        rows[0][i + 1] = -P @ Ads[i] - (2 * P - Ss[i])
        rows[i + 1][0] = -Ads[i].T @ P - (2 * P - Ss[i])
        rows[i + 1][i + 1] = Qs[i] + (2 * P - Ss[i])
    for k in range(n_src):
        wk = float(tau_f[k]) if weighted else 1.0
        rows[0][n_src + 1 + k] = wk * Ytop
        rows[n_src + 1 + k][0] = wk * Ytop.T
        for i in range(n_src):
            rows[i + 1][n_src + 1 + k] = wk * (P @ Ads[i]).T
            rows[n_src + 1 + k][i + 1] = wk * (P @ Ads[i])
        rows[n_src + 1 + k][n_src + 1 + k] = (
            Ss[k] if weighted else Ss[k] / float(tau_f[k]) ** 2
        )
    for r in range(nb):
        for c in range(nb):
            if rows[r][c] is None:
                rows[r][c] = zero
    return rows


def evaluate_block(
    aug: AugmentedModel,
    P: np.ndarray,
    Qs,
    Ss,
    X: np.ndarray,
    weighted: bool = False,
) -> np.ndarray:
    """Numeric LMI block for a fixed certificate (literal form by default)."""
    X = np.asarray(X, dtype=float).reshape(aug.n, 1)
    rows = _block_rows(
        aug.A_bar,
        [np.asarray(M) for M in aug.A_bar_d],
        aug.C_bar,
        aug.tau_f,
        np.asarray(P, dtype=float),
        [np.asarray(Q, dtype=float) for Q in Qs],
        [np.asarray(S, dtype=float) for S in Ss],
        X,
        weighted,
    )
    return np.block(rows)


def _scaling(aug: AugmentedModel, enabled: bool) -> np.ndarray:
    if not enabled:
        return np.ones(aug.n)
    d = np.ones(aug.n)
    d[aug.n_sources :] = 0.1  # queue and anomaly states
    return d


def _scaled_matrices(aug: AugmentedModel, d: np.ndarray):
    Dm = np.diag(d)
    Dinv = np.diag(1.0 / d)
    A_s = Dm @ aug.A_bar @ Dinv
    Ads_s = np.array([Dm @ M @ Dinv for M in aug.A_bar_d])
    C_s = aug.C_bar @ Dinv
    return A_s, Ads_s, C_s


def assemble_lmi(aug: AugmentedModel, opts: SynthesisOptions | None = None) -> LMIProblem:
    """Build the feasibility problem (tail-scaled form, optional state scaling).

    Rejects models with any non-positive forward delay (the delay-dependent
    tails are undefined there).
    """
    import cvxpy as cp

    opts = opts or SynthesisOptions()
    if np.any(aug.tau_f <= 0):
        raise ValueError(f"forward delays must be strictly positive, got {aug.tau_f}")
    n = aug.n
    n_src = aug.n_sources
    eps = opts.eps if opts.eps is not None else default_eps(aug)
    d = _scaling(aug, opts.scale_states)
    eps_solve = eps / float(np.min(d)) ** 2
    A_s, Ads_s, C_s = _scaled_matrices(aug, d)

    P = cp.Variable((n, n), symmetric=True)
    Qs = [cp.Variable((n, n), symmetric=True) for _ in range(n_src)]
    Ss = [cp.Variable((n, n), symmetric=True) for _ in range(n_src)]
    X = cp.Variable((n, 1))
    block = cp.bmat(_block_rows(A_s, list(Ads_s), C_s, aug.tau_f, P, Qs, Ss, X, True))
    m = block.shape[0]
    constraints = [
        P >> eps_solve * np.eye(n),
        block >> eps_solve * np.eye(m),
        cp.trace(P) <= float(n),
    ]
    constraints += [Q >> eps_solve * np.eye(n) for Q in Qs]
    constraints += [S >> eps_solve * np.eye(n) for S in Ss]
    return LMIProblem(
        P=P,
        Qs=Qs,
        Ss=Ss,
        X=X,
        block=block,
        constraints=constraints,
        n=n,
        n_sources=n_src,
        eps=eps,
        eps_solve=eps_solve,
        scale_vec=d,
        A_s=A_s,
        Ads_s=Ads_s,
        C_s=C_s,
        tau_f=np.asarray(aug.tau_f, dtype=float),
    )


def _solve(problem, opts: SynthesisOptions) -> tuple[str, str]:
    """Run the solver chain; returns (status-class, raw solver status)."""
    import cvxpy as cp

    try:
        problem.solve(solver=opts.solver, **opts.solver_opts)
        raw = problem.status
    except cp.error.SolverError:
        raw = "solver_error"
    if raw in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        return _FEASIBLE, f"{opts.solver}:{raw}"
    if raw in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return _INFEASIBLE, f"{opts.solver}:{raw}"
    # numerical trouble: optionally fall back, accepting only a clean verdict
    if opts.allow_fallback and opts.solver != "SCS":
        try:
            problem.solve(solver="SCS")
            raw2 = problem.status
        except cp.error.SolverError:
            raw2 = "solver_error"
        if raw2 == cp.OPTIMAL:
            return _FEASIBLE, f"SCS:{raw2}"
        if raw2 == cp.INFEASIBLE:
            return _INFEASIBLE, f"SCS:{raw2}"
        return _NUMERICAL, f"{opts.solver}:{raw};SCS:{raw2}"
    return _NUMERICAL, f"{opts.solver}:{raw}"


def _decay_cut(lmi: LMIProblem, X_expr, beta: float):
    A_free = lmi.A_s + lmi.Ads_s.sum(axis=0)
    C = lmi.C_s
    return (
        -A_free.T @ lmi.P - lmi.P @ A_free + C.T @ X_expr.T + X_expr @ C
        - 2.0 * beta * lmi.P
        >> 0
    )


def _extract(aug: AugmentedModel, lmi: LMIProblem, X_value: np.ndarray, opts, status, raw):
    Dm = np.diag(lmi.scale_vec)
    P = Dm @ lmi.P.value @ Dm
    P = 0.5 * (P + P.T)
    Qs = tuple(0.5 * (Dm @ Q.value @ Dm + (Dm @ Q.value @ Dm).T) for Q in lmi.Qs)
    Ss = tuple(0.5 * (Dm @ S.value @ Dm + (Dm @ S.value @ Dm).T) for S in lmi.Ss)
    X = Dm @ X_value.reshape(lmi.n, 1)
    L = np.linalg.solve(P, X).ravel()
    block = evaluate_block(aug, P, Qs, Ss, X, weighted=False)
    return SynthesisResult(
        status=status,
        L=L,
        P=P,
        Qs=Qs,
        Ss=Ss,
        X=X,
        eps=lmi.eps,
        min_eig_block=float(np.min(np.linalg.eigvalsh(0.5 * (block + block.T)))),
        solver_name=raw.split(":")[0],
        solver_status=raw,
        options=opts,
    )


def synthesize_gain(
    aug: AugmentedModel, opts: SynthesisOptions | None = None
) -> SynthesisResult:
    """Solve for a certified observer gain ``L = P^{-1} X``."""
    import cvxpy as cp

    opts = opts or SynthesisOptions()
    lmi = assemble_lmi(aug, opts)
    constraints = list(lmi.constraints)
    if opts.decay_rate is not None and opts.decay_rate > 0:
        constraints.append(_decay_cut(lmi, lmi.X, float(opts.decay_rate)))
    objective = cp.Minimize(cp.trace(lmi.P)) if opts.minimize_trace else cp.Minimize(0)
    problem = cp.Problem(objective, constraints)
    status, raw = _solve(problem, opts)
    if status != _FEASIBLE:
        return SynthesisResult(
            status=status,
            L=None,
            P=None,
            Qs=None,
            Ss=None,
            X=None,
            eps=lmi.eps,
            min_eig_block=None,
            solver_name=raw.split(":")[0],
            solver_status=raw,
            options=opts,
        )
    return _extract(aug, lmi, lmi.X.value, opts, status, raw)


def verify_gain(
    aug: AugmentedModel, L: np.ndarray, opts: SynthesisOptions | None = None
) -> SynthesisResult:
    """Certify a *fixed* gain by solving the same condition with ``X = P L``.

    Feasible ⇒ L is delay-dependently stabilizing for the error dynamics.
    Any other outcome (infeasible or solver failure) is inconclusive — the
    condition is sufficient only — and is annotated as such in
    ``solver_status``.
    """
    import cvxpy as cp

    opts = opts or SynthesisOptions()
    L = np.asarray(L, dtype=float).ravel()
    if L.shape[0] != aug.n or not np.all(np.isfinite(L)):
        raise ValueError(f"gain must be a finite vector of length {aug.n}")
    lmi = assemble_lmi(aug, opts)
    # fixed gain in solver coordinates: L_s = D L, so X = P_s @ L_s maps back to P L
    L_s = (lmi.scale_vec * L).reshape(aug.n, 1)
    X_expr = lmi.P @ L_s
    block = cp.bmat(
        _block_rows(lmi.A_s, list(lmi.Ads_s), lmi.C_s, lmi.tau_f, lmi.P, lmi.Qs, lmi.Ss, X_expr, True)
    )
    m = block.shape[0]
    constraints = [
        lmi.P >> lmi.eps_solve * np.eye(lmi.n),
        block >> lmi.eps_solve * np.eye(m),
        cp.trace(lmi.P) <= float(lmi.n),
    ]
    constraints += [Q >> lmi.eps_solve * np.eye(lmi.n) for Q in lmi.Qs]
    constraints += [S >> lmi.eps_solve * np.eye(lmi.n) for S in lmi.Ss]
    if opts.decay_rate is not None and opts.decay_rate > 0:
        constraints.append(_decay_cut(lmi, X_expr, float(opts.decay_rate)))
    problem = cp.Problem(cp.Minimize(0), constraints)
    status, raw = _solve(problem, opts)
    if status != _FEASIBLE:
        raw += ";inconclusive: the condition is sufficient only"
        return SynthesisResult(
            status=status,
            L=L,
            P=None,
            Qs=None,
            Ss=None,
            X=None,
            eps=lmi.eps,
            min_eig_block=None,
            solver_name=raw.split(":")[0],
            solver_status=raw,
            options=opts,
        )
    result = _extract(aug, lmi, (lmi.P.value @ L_s).ravel(), opts, status, raw)
    # keep the requested gain verbatim (solve(P, X) reproduces it to rounding)
    return replace(result, L=L)


def check_certificate(
    aug: AugmentedModel, result: SynthesisResult, gain_rtol: float = 1e-8
) -> CertificateReport:
    """Re-assemble the literal block from the certificate and audit eigenvalues.

    Passes iff every certificate matrix and the block clear ``eps/2`` and the
    gain reproduces ``P L = X`` to relative residual ``gain_rtol``.
    """
    if not result.feasible or result.P is None:
        return CertificateReport(
            ok=False,
            min_eig_P=float("nan"),
            min_eig_Q=float("nan"),
            min_eig_S=float("nan"),
            min_eig_block=float("nan"),
            gain_residual=float("nan"),
            eps=result.eps,
            messages=(f"no certificate: status={result.status}",),
        )
    msgs: list[str] = []
    thresh = result.eps / 2.0
    eP = float(np.min(np.linalg.eigvalsh(0.5 * (result.P + result.P.T))))
    eQ = float(min(np.min(np.linalg.eigvalsh(0.5 * (Q + Q.T))) for Q in result.Qs))
    eS = float(min(np.min(np.linalg.eigvalsh(0.5 * (S + S.T))) for S in result.Ss))
    if eP <= 0:
        msgs.append("P not positive definite")
    elif eP < thresh:
        msgs.append(f"P margin {eP:.3e} below eps/2={thresh:.3e}")
    if eQ < thresh:
        msgs.append(f"Q margin {eQ:.3e} below eps/2={thresh:.3e}")
    if eS < thresh:
        msgs.append(f"S margin {eS:.3e} below eps/2={thresh:.3e}")
    block = evaluate_block(aug, result.P, result.Qs, result.Ss, result.X, weighted=False)
    eB = float(np.min(np.linalg.eigvalsh(0.5 * (block + block.T))))
    if eB < thresh:
        msgs.append(f"block margin {eB:.3e} below eps/2={thresh:.3e}")
    res = float(
        np.linalg.norm(result.P @ result.L.reshape(-1, 1) - result.X)
        / max(np.linalg.norm(result.X), 1e-300)
    )
    if res > gain_rtol:
        msgs.append(f"gain residual {res:.3e} above {gain_rtol:.0e}")
    return CertificateReport(
        ok=not msgs,
        min_eig_P=eP,
        min_eig_Q=eQ,
        min_eig_S=eS,
        min_eig_block=eB,
        gain_residual=res,
        eps=result.eps,
        messages=tuple(msgs),
    )


def _svec_basis(n: int):
    """Symmetric basis matrices E_ij (i<=j) in row-major upper-triangle order."""
    basis = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            E[i, j] = 1.0
            E[j, i] = 1.0
            basis.append(E)
    return basis


def export_triplets(aug: AugmentedModel, eps: float | None = None) -> str:
    """Serialize the literal feasibility LMI in SDPA sparse format (.dat-s).

    Scalar decision variables are, in order: the upper-triangle entries
    (row-major) of P, then of each Q_i, then of each S_i, then the entries of
    X. The PSD constraint is block-diagonal: the literal LMI block followed by
    P, each Q_i, and each S_i; F0 = eps*I on every block, so feasibility of
    F(y) - F0 >= 0 matches the library's eps-strict problem. Upper-triangle
    entries only, 17 significant digits.
    """
    if np.any(aug.tau_f <= 0):
        raise ValueError(f"forward delays must be strictly positive, got {aug.tau_f}")
    n = aug.n
    n_src = aug.n_sources
    eps = eps if eps is not None else default_eps(aug)
    sym = _svec_basis(n)
    n_sym = len(sym)
    zero_n = np.zeros((n, n))
    zeros_sym = [zero_n] * n_sym
    zero_X = np.zeros((n, 1))

    # (name, count) layout of scalar variables
    m = (1 + 2 * n_src) * n_sym + n
    big = (2 * n_src + 1) * n
    block_sizes = [big] + [n] * (1 + 2 * n_src)

    def blocks_for(P, Qs, Ss, X):
        mats = [evaluate_block(aug, P, Qs, Ss, X, weighted=False), P]
        mats.extend(Qs)
        mats.extend(Ss)
        return mats

    out = io.StringIO()
    out.write('"LMI feasibility: delay-dependent observer synthesis"\n')
    out.write(f'"variables: svec(P) then svec(Q_1..Q_{n_src}) then svec(S_1..S_{n_src}) then X; svec = upper triangle row-major"\n')
    out.write(f'"blocks: [LMI block ({big}); P; Q_1..Q_{n_src}; S_1..S_{n_src}] each >= eps*I, eps={eps:.17g}"\n')
    out.write(f"{m} = mDIM\n")
    out.write(f"{len(block_sizes)} = nBLOCK\n")
    out.write("(" + ", ".join(str(s) for s in block_sizes) + ") = bLOCKsTRUCT\n")
    out.write("{" + ", ".join("0" for _ in range(m)) + "}\n")

    lines: list[str] = []

    def emit(matno: int, mats):
        for bno, M in enumerate(mats, start=1):
            Ms = 0.5 * (M + M.T)
            nz = np.argwhere(np.abs(Ms) > 0)
            for i, j in nz:
                if i <= j:
                    lines.append(f"{matno} {bno} {i + 1} {j + 1} {Ms[i, j]:.17g}")

    # F0: eps*I on every block
    emit(0, [eps * np.eye(s) for s in block_sizes])
    var = 1
    for which in range(1 + 2 * n_src):  # P, Q_1.., S_1..
        for E in sym:
            P = E if which == 0 else zero_n
            Qs = [E if which == 1 + i else zero_n for i in range(n_src)]
            Ss = [E if which == 1 + n_src + i else zero_n for i in range(n_src)]
            emit(var, blocks_for(P, Qs, Ss, zero_X))
            var += 1
    for r in range(n):
        X = np.zeros((n, 1))
        X[r, 0] = 1.0
        emit(var, blocks_for(zero_n, zeros_sym, zeros_sym, X))
        var += 1
    out.write("\n".join(lines))
    out.write("\n")
    return out.getvalue()
