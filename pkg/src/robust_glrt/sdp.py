"""Dense primal-dual interior-point solver for small block-diagonal SDPs.

Standard form, every block real symmetric (a 1x1 block is a nonnegative scalar):

    minimize    <C, X>
    subject to  <A_i, X> = b_i,  i = 1..m
                X = diag(X_1, ..., X_p) >= 0

Dual:  maximize b^T y  s.t.  sum_i y_i A_i + S = C,  S >= 0.

Search directions use Nesterov-Todd scaling with a Mehrotra predictor-corrector.
The Newton system is solved through a QR factorization of the NT-scaled
constraint matrix instead of the normal-equation (Schur) matrix, which squares
the condition number and breaks down near degenerate optima.
Intended for problems with a few dozen rows and blocks up to ~64x64.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla


@dataclass
class BlockSDP:
    C: list           # per-block (n_b, n_b)
    A: list           # per-block (m, n_b, n_b)
    b: np.ndarray     # (m,)
    # True marks a block holding the real embedding [[A, -B], [B, A]] of a
    # Hermitian matrix A + jB; iterates are kept on that subspace
    embedded: list | None = None

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        self.C = [np.asarray(c, dtype=float) for c in self.C]
        self.A = [np.asarray(a, dtype=float) for a in self.A]
        m = self.b.shape[0]
        for c, a in zip(self.C, self.A):
            if c.shape[0] != c.shape[1] or a.shape != (m,) + c.shape:
                raise ValueError("inconsistent block dimensions")
        if self.embedded is None:
            self.embedded = [False] * len(self.C)
        for c, e in zip(self.C, self.embedded):
            if e and c.shape[0] % 2:
                raise ValueError("embedded Hermitian blocks need even size")

    @property
    def m(self) -> int:
        return self.b.shape[0]

    @property
    def dims(self) -> list[int]:
        return [c.shape[0] for c in self.C]

    def op(self, X: list) -> np.ndarray:
        """A(X)_i = sum over blocks <A_i, X>."""
        return sum(np.tensordot(a, x, axes=([1, 2], [0, 1])) for a, x in zip(self.A, X))

    def adj(self, y: np.ndarray) -> list:
        return [np.tensordot(y, a, axes=1) for a in self.A]


@dataclass
class SDPResult:
    status: str            # "optimal" | "max-iter" | "infeasible" | "numerical"
    X: list
    y: np.ndarray
    S: list
    primal_obj: float
    dual_obj: float
    gap: float             # <X, S>
    rel_gap: float
    primal_res: float      # ||b - A(X)|| / (1 + ||b||)
    dual_res: float        # ||C - S - A^T y|| / (1 + ||C||)
    iterations: int
    history: list = field(default_factory=list)


def _inner(X: list, Y: list) -> float:
    return float(sum(np.vdot(x, y) for x, y in zip(X, Y)))


def _sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


def project_embedded(Y: np.ndarray) -> np.ndarray:
    """Nearest matrix of the form [[A, -B], [B, A]]; maps PSD to PSD."""
    n = Y.shape[0] // 2
    A = 0.5 * (Y[:n, :n] + Y[n:, n:])
    B = 0.5 * (Y[n:, :n] - Y[:n, n:])
    return np.block([[A, -B], [B, A]])


def _nt_scaling(X: np.ndarray, S: np.ndarray):
    """NT scaling point: returns (G, Ginv, lam) with G^T S G = G^-1 X G^-T = diag(lam)."""
    L = np.linalg.cholesky(X)
    R = np.linalg.cholesky(S)
    U, sv, Vt = np.linalg.svd(R.T @ L)
    isq = 1.0 / np.sqrt(sv)
    G = (L @ Vt.T) * isq
    Ginv = (np.sqrt(sv)[:, None] * Vt) @ sla.solve_triangular(L, np.eye(L.shape[0]), lower=True)
    return G, Ginv, sv


def _scaled_step(lam: np.ndarray, d: np.ndarray) -> float:
    """Largest a with diag(lam) + a d >= 0."""
    r = 1.0 / np.sqrt(lam)
    lmin = np.linalg.eigvalsh(_sym(r[:, None] * d * r[None, :]))[0]
    return math.inf if lmin >= 0 else -1.0 / lmin


def _metrics(problem, X, y, S, normb, normC):
    rp = problem.b - problem.op(X)
    Rd = [c - s - aty for c, s, aty in zip(problem.C, S, problem.adj(y))]
    gap = _inner(X, S)
    pobj = _inner(problem.C, X)
    dobj = float(problem.b @ y)
    pres = float(np.linalg.norm(rp) / normb)
    dres = math.sqrt(sum(np.sum(r * r) for r in Rd)) / normC
    rel_gap = gap / (1.0 + abs(pobj) + abs(dobj))
    return rp, Rd, gap, pobj, dobj, pres, dres, rel_gap


def solve(problem: BlockSDP, tol: float = 1e-8, max_iter: int = 100,
          X0: list | None = None, y0=None, S0: list | None = None,
          keep_history: bool = False) -> SDPResult:
    """Infeasible-start primal-dual path following (NT direction, Mehrotra corrector).

    If the tolerance is not met the best iterate seen (smallest worst-case of
    the three residual measures) is returned with status ``max-iter`` or
    ``numerical``.
    """
    Cb, Ab, b = problem.C, problem.A, problem.b
    m = problem.m
    dims = problem.dims
    n_tot = sum(dims)
    normb = 1.0 + np.linalg.norm(b)
    normC = 1.0 + math.sqrt(sum(np.sum(c * c) for c in Cb))

    if X0 is None or S0 is None:
        normA = [math.sqrt(sum(np.sum(a[i] ** 2) for a in Ab)) for i in range(m)]
        xi = max(10.0, math.sqrt(n_tot), n_tot * max((1 + abs(b[i])) / (1 + normA[i]) for i in range(m)))
        eta = max(10.0, math.sqrt(n_tot), max(normA), normC)
    X = [x.copy() for x in X0] if X0 is not None else [xi * np.eye(n) for n in dims]
    S = [s.copy() for s in S0] if S0 is not None else [eta * np.eye(n) for n in dims]
    y = np.zeros(m) if y0 is None else np.asarray(y0, dtype=float).copy()

    history = []
    status = "max-iter"
    best = None
    it = 0
    for it in range(max_iter + 1):
        rp, Rd, gap, pobj, dobj, pres, dres, rel_gap = _metrics(problem, X, y, S, normb, normC)
        if keep_history:
            history.append((it, pobj, dobj, pres, dres, rel_gap))
        score = max(pres, dres, rel_gap)
        if np.isfinite(score) and (best is None or score < best[0]):
            best = (score, it, [x.copy() for x in X], y.copy(), [s.copy() for s in S])
        if pres <= tol and dres <= tol and rel_gap <= tol:
            status = "optimal"
            break
        if it == max_iter:
            break
        if not np.isfinite(score) or abs(dobj) > 1e14 or abs(pobj) > 1e14:
            status = "infeasible" if np.isfinite(score) else "numerical"
            break
        mu = gap / n_tot

        try:
            scal = [_nt_scaling(x, s) for x, s in zip(X, S)]
        except np.linalg.LinAlgError:
            status = "numerical"
            break
        Gs = [g for g, _, _ in scal]
        lams = [lam for _, _, lam in scal]

        # columns: vec(G^T A_i G) stacked over blocks, shape (sum n_b^2, m)
        Bmat = np.concatenate(
            [(G.T @ a @ G).reshape(m, -1).T for G, a in zip(Gs, Ab)], axis=0)
        Q, R = np.linalg.qr(Bmat)
        if np.min(np.abs(np.diag(R))) <= 1e-300:
            status = "numerical"
            break
        Rd_s = [G.T @ r @ G for G, r in zip(Gs, Rd)]
        w = sla.solve_triangular(R, rp, trans="T")          # R^-T rp

        def direction(Rc_scaled):
            # scaled primal step: Q (Q^T v + R^-T rp) - v with v = G^T Rd G - Rc
            v = np.concatenate([(rds - rc).reshape(-1) for rds, rc in zip(Rd_s, Rc_scaled)])
            coef = Q.T @ v + w
            dy = sla.solve_triangular(R, coef)
            dx_vec = Q @ coef - v
            dXs, dSs, off = [], [], 0
            for n, rds in zip(dims, Rd_s):
                dxs = _sym(dx_vec[off:off + n * n].reshape(n, n))
                off += n * n
                dXs.append(dxs)
            # scaled dual step from dX~ + dS~ = Rc
            dSs = [_sym(rc - dxs) for rc, dxs in zip(Rc_scaled, dXs)]
            return dXs, dy, dSs

        def steps(dXs, dSs, frac):
            ap = min(1.0, frac * min(_scaled_step(l, d) for l, d in zip(lams, dXs)))
            ad = min(1.0, frac * min(_scaled_step(l, d) for l, d in zip(lams, dSs)))
            return ap, ad

        # predictor
        Rc_aff = [-np.diag(lam) for lam in lams]
        dXa, dya, dSa = direction(Rc_aff)
        ap, ad = steps(dXa, dSa, 1.0)
        mu_aff = sum(float(np.sum((np.diag(l) + ap * dx) * (np.diag(l) + ad * ds)))
                     for l, dx, ds in zip(lams, dXa, dSa)) / n_tot
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0

        # corrector (scaled quantities are already in the NT frame)
        Rc = []
        for lam, dxs, dss in zip(lams, dXa, dSa):
            corr = 0.5 * (dxs @ dss + dss @ dxs)
            target = sigma * mu * np.eye(lam.size) - np.diag(lam * lam) - corr
            Rc.append(2.0 * target / (lam[:, None] + lam[None, :]))
        dXs, dy, dSs = direction(Rc)
        frac = 0.9 + 0.09 * min(ap, ad)
        ap, ad = steps(dXs, dSs, frac)

        X = [_sym(G @ (np.diag(l) + ap * d) @ G.T) for G, l, d in zip(Gs, lams, dXs)]
        S_new = []
        for (G, Ginv, l), d in zip(scal, dSs):
            S_new.append(_sym(Ginv.T @ (np.diag(l) + ad * d) @ Ginv))
        S = S_new
        y = y + ad * dy
        X = [project_embedded(x) if e else x for x, e in zip(X, problem.embedded)]
        S = [project_embedded(s) if e else s for s, e in zip(S, problem.embedded)]

    if status != "optimal" and best is not None:
        _, it_best, X, y, S = best
        rp, Rd, gap, pobj, dobj, pres, dres, rel_gap = _metrics(problem, X, y, S, normb, normC)
    return SDPResult(status=status, X=X, y=y, S=S, primal_obj=pobj, dual_obj=dobj, gap=gap,
                     rel_gap=rel_gap, primal_res=pres, dual_res=dres, iterations=it, history=history)
