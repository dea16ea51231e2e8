"""Barrier/Newton interior-point solver for the convex window subproblems.

Each subproblem minimizes, over per-step attention vectors u_k (boxed) and
predicted information matrices Q_pred,k (SPD), a smooth convex objective

    sum_k  trace(Theta_k F_k^-1) + <G_k, F_k> - (beta/2) logdet Q_pred,k
         + (rho/2) ||Q_pred,k - prox_pred,k||_F^2
         + (rho/2) ||F_k - prox_filt,k||_F^2

with the filtered information eliminated exactly by F_k = Q_pred,k +
C_k' diag(u_k) C_k.  In coupled mode, consecutive steps are tied by the
block LMIs that relax the prediction Riccati equality; in separable mode
(the ADMM x-step) there are no cross-step constraints and each step is an
independent problem.

The method is a standard log-barrier path follower: Newton steps over svec
coordinates with backtracking (Armijo 1e-4, shrink 0.5), a PSD-preserving
fraction-to-boundary cap of 0.99, and the path parameter multiplied by 10
per centering stage.  All iterates are strictly feasible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .symmetric import smat, spd_sqrt, svec, svec_basis

__all__ = [
    "Infeasible",
    "MaxIterations",
    "SubsolverFailure",
    "StepBlock",
    "ConvexSubproblem",
    "BarrierConfig",
    "SolverReport",
    "SolveResult",
    "solve",
    "solve_zstep",
    "gradient_check",
    "subproblem_objective",
    "interior_chain",
]


class Infeasible(Exception):
    """No strictly feasible starting point could be produced."""


class MaxIterations(Exception):
    """The barrier path ran out of centering stages."""


class SubsolverFailure(Exception):
    """A convex subproblem solve failed; carries the failing index."""

    def __init__(self, message, step=None, iteration=None):
        self.step = step
        self.iteration = iteration
        super().__init__(message)


@dataclass
class StepBlock:
    """Data of one time step inside a window subproblem."""

    Theta: np.ndarray
    G: np.ndarray
    C: np.ndarray
    caps: np.ndarray
    q_fixed: np.ndarray | None = None
    rho: float = 0.0
    prox_pred: np.ndarray | None = None
    prox_filt: np.ndarray | None = None


@dataclass
class ConvexSubproblem:
    """A window of step blocks, optionally chained by prediction LMIs.

    ``A`` holds the step-to-step dynamics (A[k-1] couples steps k-1 and k)
    and enables the LMI chain; with ``A`` set to None the steps are
    independent (the ADMM x-step form).
    """

    steps: list
    beta_half: float = 0.0
    A: np.ndarray | None = None
    W: np.ndarray | None = None

    @property
    def coupled(self) -> bool:
        return self.A is not None and len(self.steps) > 1

    @property
    def dim(self) -> int:
        return self.steps[0].Theta.shape[0]


@dataclass
class BarrierConfig:
    tol: float = 1e-7
    t_init: float = 1.0
    t_scale: float = 10.0
    max_stages: int = 80
    max_newton_per_stage: int = 60
    center_tol: float = 1e-5
    final_center_tol: float = 1e-9
    armijo: float = 1e-4
    backtrack: float = 0.5
    boundary_frac: float = 0.99


@dataclass
class SolverReport:
    status: str
    newton_iterations: int
    kkt_residual: float
    barrier_stages: int


@dataclass
class SolveResult:
    Q_pred: list
    Q_filt: list
    u: list
    x: np.ndarray
    report: SolverReport
    t_final: float = np.inf


def _sym(a):
    return 0.5 * (a + a.T)


def _chol_or_none(a):
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return None


def _inv_from_chol(L):
    Linv = np.linalg.solve(L, np.eye(L.shape[0]))
    return Linv.T @ Linv


def _step_to_boundary(L, delta):
    """Largest alpha keeping X + alpha*delta PD, where X = L L'."""
    Y = np.linalg.solve(L, delta)
    N = _sym(np.linalg.solve(L, Y.T).T)
    lam = np.linalg.eigvalsh(N)[0]
    if lam >= 0.0:
        return np.inf
    return 1.0 / (-lam)


def _solve_newton_system(H, g):
    n = H.shape[0]
    ridge = 0.0
    scale = max(1.0, float(np.max(np.abs(np.diag(H)))))
    for _ in range(8):
        try:
            L = np.linalg.cholesky(_sym(H) + ridge * np.eye(n))
            return -np.linalg.solve(L.T, np.linalg.solve(L, g))
        except np.linalg.LinAlgError:
            ridge = max(ridge * 100.0, 1e-14 * scale)
    raise SubsolverFailure("Newton system is not positive definite")


def _lmi_pred_rows(mats, A, Wh):
    """Derivative blocks of the chain LMI w.r.t. the predicted-info entries."""
    p, n, _ = mats.shape
    rows = np.zeros((p, 3 * n, 3 * n))
    for i in range(p):
        X = mats[i]
        XA = X @ A
        XW = X @ Wh
        rows[i, :n, :n] = X
        rows[i, :n, n : 2 * n] = XA
        rows[i, n : 2 * n, :n] = XA.T
        rows[i, :n, 2 * n :] = XW
        rows[i, 2 * n :, :n] = XW.T
    return rows


def _lmi_filt_rows(mats):
    p, n, _ = mats.shape
    rows = np.zeros((p, 3 * n, 3 * n))
    rows[:, n : 2 * n, n : 2 * n] = mats
    return rows


class _Lmi:
    """One chain LMI, affine in a slice of the global variable vector."""

    def __init__(self, var_idx, D, base):
        self.var_idx = np.asarray(var_idx, dtype=int)
        self.D = D
        self.base = base

    def matrix(self, x):
        return self.base + np.einsum("p,pab->ab", x[self.var_idx], self.D)

    def delta(self, d):
        return np.einsum("p,pab->ab", d[self.var_idx], self.D)


class _WindowEngine:
    """Newton/barrier machinery for one coupled or single-step subproblem."""

    def __init__(self, p: ConvexSubproblem):
        self.p = p
        n = p.dim
        self.n = n
        s = n * (n + 1) // 2
        self.s = s
        self.E = svec_basis(n)

        self.q_off = []
        self.u_off = []
        off = 0
        for blk in p.steps:
            if blk.q_fixed is None:
                self.q_off.append(off)
                off += s
            else:
                self.q_off.append(None)
            self.u_off.append(off)
            off += blk.C.shape[0]
        self.dim = off

        self.DF = []          # derivative of F w.r.t. local vars, stacked
        self.Couter = []
        self.Nmat = []        # svec(F) = q + Nmat @ u (+ const)
        for blk in p.steps:
            M = blk.C.shape[0]
            outer = np.einsum("ma,mb->mab", blk.C, blk.C)
            self.Couter.append(outer)
            Nm = np.stack([svec(outer[i]) for i in range(M)], axis=1) if M else np.zeros((s, 0))
            self.Nmat.append(Nm)
            if blk.q_fixed is None:
                self.DF.append(np.concatenate([self.E, outer], axis=0))
            else:
                self.DF.append(outer)

        self.lmis = []
        if p.coupled:
            Wh = spd_sqrt(p.W)
            for k in range(1, len(p.steps)):
                A = p.A[k - 1]
                prev = p.steps[k - 1]
                idx, rows = [], []
                idx.extend(range(self.q_off[k], self.q_off[k] + s))
                rows.append(_lmi_pred_rows(self.E, A, Wh))
                base = np.zeros((3 * n, 3 * n))
                base[2 * n :, 2 * n :] = np.eye(n)
                if prev.q_fixed is None:
                    idx.extend(range(self.q_off[k - 1], self.q_off[k - 1] + s))
                    rows.append(_lmi_filt_rows(self.E))
                else:
                    base[n : 2 * n, n : 2 * n] = prev.q_fixed
                Mprev = prev.C.shape[0]
                idx.extend(range(self.u_off[k - 1], self.u_off[k - 1] + Mprev))
                rows.append(_lmi_filt_rows(self.Couter[k - 1]))
                self.lmis.append(_Lmi(idx, np.concatenate(rows, axis=0), base))

        nu = 0
        for k, blk in enumerate(p.steps):
            nu += 2 * blk.C.shape[0]
            if blk.q_fixed is None:
                nu += n
        nu += 3 * n * len(self.lmis)
        self.nu = float(nu)

    # -- packing ---------------------------------------------------------

    def pack(self, Q_pred, u):
        x = np.zeros(self.dim)
        for k, blk in enumerate(self.p.steps):
            if blk.q_fixed is None:
                x[self.q_off[k] : self.q_off[k] + self.s] = svec(Q_pred[k])
            x[self.u_off[k] : self.u_off[k] + blk.C.shape[0]] = u[k]
        return x

    def unpack(self, x):
        Q_pred, u = [], []
        for k, blk in enumerate(self.p.steps):
            if blk.q_fixed is None:
                v = x[self.q_off[k] : self.q_off[k] + self.s]
                Q_pred.append(np.einsum("p,pab->ab", v, self.E))
            else:
                Q_pred.append(blk.q_fixed.copy())
            u.append(x[self.u_off[k] : self.u_off[k] + blk.C.shape[0]].copy())
        return Q_pred, u

    def filt(self, Q_pred, u):
        return [
            Q_pred[k] + blk.C.T @ (u[k][:, None] * blk.C)
            for k, blk in enumerate(self.p.steps)
        ]

    # -- evaluation ------------------------------------------------------

    def chols(self, x):
        """Cholesky factors of every PD-constrained block; None if infeasible."""
        Q_pred, u = self.unpack(x)
        for k, blk in enumerate(self.p.steps):
            if np.any(u[k] <= 0.0) or np.any(u[k] >= blk.caps):
                return None
        F = self.filt(Q_pred, u)
        Lq, LF = [], []
        for k, blk in enumerate(self.p.steps):
            if blk.q_fixed is None:
                L = _chol_or_none(Q_pred[k])
                if L is None:
                    return None
                Lq.append(L)
            else:
                Lq.append(None)
            L = _chol_or_none(F[k])
            if L is None:
                return None
            LF.append(L)
        Lm = []
        for lmi in self.lmis:
            L = _chol_or_none(lmi.matrix(x))
            if L is None:
                return None
            Lm.append(L)
        return Q_pred, u, F, Lq, LF, Lm

    def smooth_value(self, Q_pred, u, F, LF, Lq):
        p = self.p
        val = 0.0
        for k, blk in enumerate(p.steps):
            Fi = _inv_from_chol(LF[k])
            val += float(np.sum(blk.Theta * Fi)) + float(np.sum(blk.G * F[k]))
            if blk.q_fixed is None and p.beta_half > 0.0:
                val -= p.beta_half * 2.0 * float(np.sum(np.log(np.diag(Lq[k]))))
            if blk.rho > 0.0:
                if blk.prox_pred is not None and blk.q_fixed is None:
                    val += 0.5 * blk.rho * float(np.sum((Q_pred[k] - blk.prox_pred) ** 2))
                if blk.prox_filt is not None:
                    val += 0.5 * blk.rho * float(np.sum((F[k] - blk.prox_filt) ** 2))
        return val

    def barrier_value(self, x, u, Lq, Lm):
        val = 0.0
        for k, blk in enumerate(self.p.steps):
            val -= float(np.sum(np.log(u[k])) + np.sum(np.log(blk.caps - u[k])))
            if blk.q_fixed is None:
                val -= 2.0 * float(np.sum(np.log(np.diag(Lq[k]))))
        for L in Lm:
            val -= 2.0 * float(np.sum(np.log(np.diag(L))))
        return val

    def value(self, x):
        state = self.chols(x)
        if state is None:
            return np.inf, None
        Q_pred, u, F, Lq, LF, Lm = state
        f = self.smooth_value(Q_pred, u, F, LF, Lq)
        phi = self.barrier_value(x, u, Lq, Lm)
        return f, phi

    def smooth_grad(self, x, want_hessian=True):
        """Gradient (and Hessian) of the smooth objective part only."""
        state = self.chols(x)
        if state is None:
            raise Infeasible("point is not strictly feasible")
        Q_pred, u, F, Lq, LF, _ = state
        g = np.zeros(self.dim)
        H = np.zeros((self.dim, self.dim)) if want_hessian else None
        p = self.p
        for k, blk in enumerate(p.steps):
            M = blk.C.shape[0]
            free_q = blk.q_fixed is None
            lo = self.q_off[k] if free_q else self.u_off[k]
            width = (self.s if free_q else 0) + M
            sl = slice(lo, lo + width)
            DF = self.DF[k]

            Fi = _inv_from_chol(LF[k])
            K1 = Fi @ blk.Theta @ Fi
            g[sl] += np.einsum("pab,ab->p", DF, blk.G - K1)
            if want_hessian:
                S1 = np.einsum("ab,pbc->pac", K1, DF)
                S2 = np.einsum("ab,pbc->pac", Fi, DF)
                E1 = np.einsum("pac,qca->pq", S1, S2)
                H[sl, sl] += E1 + E1.T

            if free_q and p.beta_half > 0.0:
                Qpi = _inv_from_chol(Lq[k])
                qsl = slice(self.q_off[k], self.q_off[k] + self.s)
                g[qsl] -= p.beta_half * np.einsum("pab,ab->p", self.E, Qpi)
                if want_hessian:
                    Y = np.einsum("ab,pbc->pac", Qpi, self.E)
                    H[qsl, qsl] += p.beta_half * np.einsum("pac,qca->pq", Y, Y)

            if blk.rho > 0.0:
                usl = slice(self.u_off[k], self.u_off[k] + M)
                if blk.prox_pred is not None and free_q:
                    qsl = slice(self.q_off[k], self.q_off[k] + self.s)
                    g[qsl] += blk.rho * (x[qsl] - svec(blk.prox_pred))
                    if want_hessian:
                        H[qsl, qsl] += blk.rho * np.eye(self.s)
                if blk.prox_filt is not None:
                    sF = svec(F[k])
                    r = blk.rho * (sF - svec(blk.prox_filt))
                    if free_q:
                        qsl = slice(self.q_off[k], self.q_off[k] + self.s)
                        g[qsl] += r
                        if want_hessian:
                            H[qsl, qsl] += blk.rho * np.eye(self.s)
                            H[qsl, usl] += blk.rho * self.Nmat[k]
                            H[usl, qsl] += blk.rho * self.Nmat[k].T
                    g[usl] += self.Nmat[k].T @ r
                    if want_hessian:
                        H[usl, usl] += blk.rho * (self.Nmat[k].T @ self.Nmat[k])
        return g, H

    def grad_hess(self, x, t):
        """Gradient and Hessian of t*f + phi at a strictly feasible x."""
        state = self.chols(x)
        if state is None:
            raise Infeasible("point left the interior")
        Q_pred, u, F, Lq, LF, Lm = state
        f_val = self.smooth_value(Q_pred, u, F, LF, Lq)
        phi_val = self.barrier_value(x, u, Lq, Lm)

        g = np.zeros(self.dim)
        H = np.zeros((self.dim, self.dim))
        p = self.p
        for k, blk in enumerate(p.steps):
            M = blk.C.shape[0]
            free_q = blk.q_fixed is None
            lo = self.q_off[k] if free_q else self.u_off[k]
            width = (self.s if free_q else 0) + M
            sl = slice(lo, lo + width)
            DF = self.DF[k]

            # smooth: trace-inverse + linear trace
            Fi = _inv_from_chol(LF[k])
            K1 = Fi @ blk.Theta @ Fi
            g[sl] += t * np.einsum("pab,ab->p", DF, blk.G - K1)
            S1 = np.einsum("ab,pbc->pac", K1, DF)
            S2 = np.einsum("ab,pbc->pac", Fi, DF)
            E1 = np.einsum("pac,qca->pq", S1, S2)
            H[sl, sl] += t * (E1 + E1.T)

            # -logdet Q_pred: beta/2-weighted objective plus unit cone barrier
            if free_q:
                Qpi = _inv_from_chol(Lq[k])
                w = t * p.beta_half + 1.0
                qsl = slice(self.q_off[k], self.q_off[k] + self.s)
                g[qsl] -= w * np.einsum("pab,ab->p", self.E, Qpi)
                Y = np.einsum("ab,pbc->pac", Qpi, self.E)
                H[qsl, qsl] += w * np.einsum("pac,qca->pq", Y, Y)

            # proximal quadratics
            if blk.rho > 0.0:
                usl = slice(self.u_off[k], self.u_off[k] + M)
                if blk.prox_pred is not None and free_q:
                    qsl = slice(self.q_off[k], self.q_off[k] + self.s)
                    g[qsl] += t * blk.rho * (x[qsl] - svec(blk.prox_pred))
                    H[qsl, qsl] += t * blk.rho * np.eye(self.s)
                if blk.prox_filt is not None:
                    r = t * blk.rho * (svec(F[k]) - svec(blk.prox_filt))
                    if free_q:
                        qsl = slice(self.q_off[k], self.q_off[k] + self.s)
                        g[qsl] += r
                        H[qsl, qsl] += t * blk.rho * np.eye(self.s)
                        H[qsl, usl] += t * blk.rho * self.Nmat[k]
                        H[usl, qsl] += t * blk.rho * self.Nmat[k].T
                    g[usl] += self.Nmat[k].T @ r
                    H[usl, usl] += t * blk.rho * (self.Nmat[k].T @ self.Nmat[k])

            # box barrier
            usl = slice(self.u_off[k], self.u_off[k] + M)
            uk = u[k]
            g[usl] += -1.0 / uk + 1.0 / (blk.caps - uk)
            H[usl.start : usl.stop, usl.start : usl.stop][np.diag_indices(M)] += (
                1.0 / uk**2 + 1.0 / (blk.caps - uk) ** 2
            )

        for lmi, L in zip(self.lmis, Lm):
            Minv = _inv_from_chol(L)
            g[lmi.var_idx] -= np.einsum("pab,ab->p", lmi.D, Minv)
            Tm = np.einsum("ab,pbc->pac", Minv, lmi.D)
            Hloc = np.einsum("pac,qca->pq", Tm, Tm)
            H[np.ix_(lmi.var_idx, lmi.var_idx)] += Hloc

        return g, H, f_val, phi_val, state

    def max_step(self, x, d, state):
        _, u, _, Lq, _, Lm = state
        alpha = np.inf
        for k, blk in enumerate(self.p.steps):
            du = d[self.u_off[k] : self.u_off[k] + blk.C.shape[0]]
            uk = u[k]
            neg = du < 0
            if np.any(neg):
                alpha = min(alpha, float(np.min(-uk[neg] / du[neg])))
            pos = du > 0
            if np.any(pos):
                alpha = min(alpha, float(np.min((blk.caps - uk)[pos] / du[pos])))
            if blk.q_fixed is None:
                dq = d[self.q_off[k] : self.q_off[k] + self.s]
                dQ = np.einsum("p,pab->ab", dq, self.E)
                alpha = min(alpha, _step_to_boundary(Lq[k], dQ))
        for lmi, L in zip(self.lmis, Lm):
            alpha = min(alpha, _step_to_boundary(L, lmi.delta(d)))
        return alpha

    # -- the path follower -------------------------------------------------

    def minimize(self, x0, cfg: BarrierConfig, t0=None):
        x = np.asarray(x0, dtype=float).copy()
        if self.chols(x) is None:
            raise Infeasible("starting point is not strictly feasible")
        f0, _ = self.value(x)
        t = t0 if t0 is not None else max(cfg.t_init, self.nu / max(1.0, abs(f0)))
        newton_total = 0
        stages = 0
        status = "max_iter"
        while stages < cfg.max_stages:
            final_stage = self.nu / t <= cfg.tol
            ctol = cfg.final_center_tol if final_stage else cfg.center_tol
            for _ in range(cfg.max_newton_per_stage):
                g, H, f_val, phi_val, state = self.grad_hess(x, t)
                d = _solve_newton_system(H, g)
                lam2 = float(-g @ d)
                newton_total += 1
                if lam2 / 2.0 <= ctol:
                    break
                alpha = min(1.0, cfg.boundary_frac * self.max_step(x, d, state))
                psi0 = t * f_val + phi_val
                slope = float(g @ d)
                accepted = False
                for _ in range(60):
                    xn = x + alpha * d
                    fn, phin = self.value(xn)
                    if np.isfinite(fn) and t * fn + phin <= psi0 + cfg.armijo * alpha * slope:
                        x = xn
                        accepted = True
                        break
                    alpha *= cfg.backtrack
                if not accepted:
                    break
            stages += 1
            if final_stage:
                status = "converged"
                break
            t *= cfg.t_scale
        if status != "converged":
            raise MaxIterations(f"barrier path exhausted after {stages} stages")
        report = SolverReport(
            status=status,
            newton_iterations=newton_total,
            kkt_residual=self.nu / t,
            barrier_stages=stages,
        )
        return x, t, report


def interior_chain(Q_init, A, W, C, caps, u_scale=1e-4, shrink=1e-3):
    """Strictly feasible chain: near-zero attention, LMIs slackened by shrink.

    Propagates the prediction recursion with a (1-shrink) pullback so every
    chain LMI holds strictly (the slack is shrink * W at least), which makes
    it a valid interior start for the coupled solver.
    """
    steps = len(C)
    u = [u_scale * np.asarray(c, dtype=float) for c in caps]
    Q_pred = [np.asarray(Q_init, dtype=float)]
    for k in range(1, steps):
        Fprev = Q_pred[k - 1] + C[k - 1].T @ (u[k - 1][:, None] * C[k - 1])
        P = np.linalg.inv(Fprev)
        Q_next = np.linalg.inv(A[k - 1] @ P @ A[k - 1].T + W)
        Q_pred.append((1.0 - shrink) * _sym(Q_next))
    return Q_pred, u


def _default_start(p: ConvexSubproblem):
    steps = p.steps
    u = [0.5 * blk.caps for blk in steps]
    if p.coupled:
        Q_pred, _ = interior_chain(
            steps[0].q_fixed,
            p.A,
            p.W,
            [blk.C for blk in steps],
            [blk.caps for blk in steps],
            u_scale=0.5,
            shrink=1e-3,
        )
        return Q_pred, u
    Q_pred = []
    for blk in steps:
        if blk.q_fixed is not None:
            Q_pred.append(blk.q_fixed)
            continue
        anchor = blk.prox_pred if blk.prox_pred is not None else np.eye(p.dim)
        w, v = np.linalg.eigh(_sym(anchor))
        floor = max(1e-6, 1e-3 * float(np.max(np.abs(w))) if w.size else 1e-6)
        Q_pred.append((v * np.clip(w, floor, None)) @ v.T)
    return Q_pred, u


def solve(
    p: ConvexSubproblem,
    tol: float = 1e-7,
    x0=None,
    t0=None,
    cfg: BarrierConfig | None = None,
) -> SolveResult:
    """Solve one convex subproblem to a duality-gap bound of ``tol``.

    Separable multi-step problems are split and solved per step.  ``x0``
    (a packed iterate from a previous solve) and ``t0`` warm-start the
    barrier path.
    """
    cfg = cfg or BarrierConfig()
    if cfg.tol != tol:
        cfg = BarrierConfig(**{**cfg.__dict__, "tol": tol})

    if not p.coupled and len(p.steps) > 1:
        s = p.dim * (p.dim + 1) // 2
        results = []
        off = 0
        for blk in p.steps:
            width = (0 if blk.q_fixed is not None else s) + blk.C.shape[0]
            x0_k = None if x0 is None else np.asarray(x0)[off : off + width]
            off += width
            sub = ConvexSubproblem([blk], beta_half=p.beta_half)
            results.append(solve(sub, tol=tol, x0=x0_k, t0=t0, cfg=cfg))
        report = SolverReport(
            status="converged",
            newton_iterations=sum(r.report.newton_iterations for r in results),
            kkt_residual=max(r.report.kkt_residual for r in results),
            barrier_stages=max(r.report.barrier_stages for r in results),
        )
        return SolveResult(
            [r.Q_pred[0] for r in results],
            [r.Q_filt[0] for r in results],
            [r.u[0] for r in results],
            np.concatenate([r.x for r in results]),
            report,
            t_final=min(r.t_final for r in results),
        )

    engine = _WindowEngine(p)
    if x0 is None:
        Q_pred0, u0 = _default_start(p)
        x0 = engine.pack(Q_pred0, u0)
    x0 = np.asarray(x0, dtype=float)
    if engine.chols(x0) is None:
        raise Infeasible("no strictly feasible start found")
    x, t_final, report = engine.minimize(x0, cfg, t0=t0)
    Q_pred, u = engine.unpack(x)
    Q_filt = engine.filt(Q_pred, u)
    return SolveResult(Q_pred, Q_filt, u, x, report, t_final=t_final)


def pack_point(p: ConvexSubproblem, Q_pred, u) -> np.ndarray:
    """Pack matrices and allocations into the solver's variable vector."""
    return _WindowEngine(p).pack(Q_pred, u)


def subproblem_objective(p: ConvexSubproblem, Q_pred, u, include_prox: bool = False):
    """Smooth objective of a subproblem at a given point (no barriers)."""
    val = 0.0
    for k, blk in enumerate(p.steps):
        Qp = np.asarray(Q_pred[k], dtype=float)
        F = Qp + blk.C.T @ (np.asarray(u[k])[:, None] * blk.C)
        Fi = np.linalg.inv(F)
        val += float(np.sum(blk.Theta * Fi)) + float(np.sum(blk.G * F))
        if p.beta_half > 0.0:
            sign, ld = np.linalg.slogdet(Qp)
            if sign <= 0:
                return np.inf
            val -= p.beta_half * ld
        if include_prox and blk.rho > 0.0:
            if blk.prox_pred is not None and blk.q_fixed is None:
                val += 0.5 * blk.rho * float(np.sum((Qp - blk.prox_pred) ** 2))
            if blk.prox_filt is not None:
                val += 0.5 * blk.rho * float(np.sum((F - blk.prox_filt) ** 2))
    return val


def gradient_check(p: ConvexSubproblem, Q_pred, u, step: float = 1e-5) -> float:
    """Max deviation between the analytic smooth gradient and central
    finite differences of the smooth objective at a strictly feasible point."""
    engine = _WindowEngine(p)
    x = engine.pack(Q_pred, u)
    if engine.chols(x) is None:
        raise Infeasible("gradient check point must be strictly feasible")
    g, _ = engine.smooth_grad(x, want_hessian=False)
    worst = 0.0
    for i in range(engine.dim):
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        fp, _ = engine.value(xp)
        fm, _ = engine.value(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            continue
        fd = (fp - fm) / (2.0 * step)
        worst = max(worst, abs(fd - g[i]))
    return worst


# ---------------------------------------------------------------------------
# Z-step: Frobenius projection onto the chain LMI, pair by pair
# ---------------------------------------------------------------------------


def _pair_projection(T1, T2, A, Wh, tol, warm=None):
    """Project (T1, T2) onto {(S1, S2) : chain LMI(S1, S2) >= 0}.

    Feasible targets are returned unchanged (projection onto a containing
    set is the identity, and this keeps repeated projection exactly
    idempotent).  Infeasible targets go through a small barrier path.
    """
    n = T1.shape[0]
    T1 = _sym(np.asarray(T1, dtype=float))
    T2 = _sym(np.asarray(T2, dtype=float))
    E = svec_basis(n)
    s = n * (n + 1) // 2

    base = np.zeros((3 * n, 3 * n))
    base[2 * n :, 2 * n :] = np.eye(n)
    D = np.concatenate([_lmi_pred_rows(E, A, Wh), _lmi_filt_rows(E)], axis=0)

    def lmi(z):
        return base + np.einsum("p,pab->ab", z, D)

    z_target = np.concatenate([svec(T1), svec(T2)])
    if np.linalg.eigvalsh(lmi(z_target))[0] >= 0.0:
        return T1, T2

    # strictly feasible start: clip T2 to PD, scale S1 down until strict
    if warm is not None and np.linalg.eigvalsh(lmi(warm))[0] > 0.0:
        z = warm.copy()
    else:
        w, v = np.linalg.eigh(T2)
        floor = max(1e-8, 1e-3 * float(np.max(np.abs(w))))
        S2 = (v * np.clip(w, floor, None)) @ v.T
        W = Wh @ Wh
        lam = float(np.linalg.eigvalsh(A @ np.linalg.inv(S2) @ A.T + W)[-1])
        S1 = (0.5 / lam) * np.eye(n)
        z = np.concatenate([svec(S1), svec(S2)])

    nu = 3.0 * n
    t = 1.0
    for _ in range(60):
        for _ in range(50):
            L = _chol_or_none(lmi(z))
            if L is None:
                raise SubsolverFailure("projection iterate left the cone")
            Minv = _inv_from_chol(L)
            g = 2.0 * t * (z - z_target) - np.einsum("pab,ab->p", D, Minv)
            Tm = np.einsum("ab,pbc->pac", Minv, D)
            H = 2.0 * t * np.eye(2 * s) + np.einsum("pac,qca->pq", Tm, Tm)
            d = _solve_newton_system(H, g)
            lam2 = float(-g @ d)
            if lam2 / 2.0 <= 1e-10:
                break
            alpha = min(1.0, 0.99 * _step_to_boundary(L, np.einsum("p,pab->ab", d, D)))
            psi0 = t * float((z - z_target) @ (z - z_target)) - 2.0 * float(
                np.sum(np.log(np.diag(L)))
            )
            slope = float(g @ d)
            for _ in range(60):
                zn = z + alpha * d
                Ln = _chol_or_none(lmi(zn))
                if Ln is not None:
                    psin = t * float((zn - z_target) @ (zn - z_target)) - 2.0 * float(
                        np.sum(np.log(np.diag(Ln)))
                    )
                    if psin <= psi0 + 1e-4 * alpha * slope:
                        z = zn
                        break
                alpha *= 0.5
            else:
                break
        if nu / t <= tol:
            break
        t *= 10.0
    S1 = smat(z[:s]).full()
    S2 = smat(z[s:]).full()
    return S1, S2


def solve_zstep(pred_targets, filt_targets, A, W, boundary, tol: float = 1e-11,
                workers: int = 1):
    """Pairwise Frobenius projection of slack targets onto the chain LMIs.

    The pairs (S_pred[k], S_filt[k-1]) are variable-disjoint across k, so
    each is projected independently (optionally on a worker pool, merged in
    index order).  The boundary slack S_pred[0] is pinned to the fixed
    initial information; the trailing S_filt[H] appears in no LMI and is
    simply the (symmetrized) target.
    """
    H = len(pred_targets) - 1
    Wh = spd_sqrt(W)
    S_pred = [None] * (H + 1)
    S_filt = [None] * (H + 1)
    S_pred[0] = _sym(np.asarray(boundary, dtype=float))

    def project(k):
        return _pair_projection(pred_targets[k], filt_targets[k - 1], A[k - 1], Wh, tol)

    ks = range(1, H + 1)
    if workers > 1 and H > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            projected = list(pool.map(project, ks))
    else:
        projected = [project(k) for k in ks]
    for k, (S1, S2) in zip(ks, projected):
        S_pred[k] = S1
        S_filt[k - 1] = S2
    S_filt[H] = _sym(np.asarray(filt_targets[H], dtype=float))
    return S_pred, S_filt
