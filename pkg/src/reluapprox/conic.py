"""Solver kernels: box least squares, min-sum-of-norms programs, ellipsoid method.

All three kernels are deterministic and dependency-light (numpy plus
scipy.optimize for LP/NNLS plumbing). The min-sum-of-norms solver is an
operator-splitting (ADMM) scheme whose stopping rule is a *certified*
duality gap: the primal iterate is repaired to exact feasibility and the
dual iterate is scaled into its constraint set, so the reported gap is a
true bound regardless of how far the splitting iteration has converged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.optimize
import scipy.sparse
from scipy.linalg import cho_factor, cho_solve

from .dataset import LossModel
from .errors import Infeasible, IterationExhausted, NonConvergence

__all__ = [
    "box_constrained_least_squares",
    "box_lsq_batch",
    "project_polyhedral_cone",
    "MinSumNormsProblem",
    "MinSumNormsResult",
    "solve_min_sum_norms",
    "EllipsoidConfig",
    "SeparationOracle",
    "ellipsoid_maximize",
]


# ---------------------------------------------------------------------------
# box-constrained least squares
# ---------------------------------------------------------------------------


def box_lsq_batch(
    A: np.ndarray,
    targets: np.ndarray,
    lower: float = 0.0,
    upper: float = 1.0,
    tol: float = 1e-10,
    max_iter: int = 2000,
) -> tuple[np.ndarray, np.ndarray]:
    """Minimize ||A b - p||_2 over the box for every row p of ``targets``.

    Projected gradient with the exact (Cauchy) step for the quadratic,
    followed by an active-set polish that solves the free subsystem by
    least squares. Returns (B, residuals) with one row of B per target.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    P = np.atleast_2d(np.asarray(targets, dtype=float))
    N, d = P.shape[0], A.shape[0]
    m = A.shape[1]
    if m == 0:
        return np.zeros((N, 0)), np.linalg.norm(P, axis=1)
    G = A.T @ A
    Atp = P @ A  # N x m
    B = np.clip(Atp @ np.linalg.pinv(G, rcond=1e-12), lower, upper)

    scale = 1.0 + np.abs(Atp).max(initial=0.0) + np.abs(G).max(initial=0.0)

    def kkt_residual(Bsub, Atpsub):
        grad = Bsub @ G - Atpsub
        return np.linalg.norm(Bsub - np.clip(Bsub - grad, lower, upper), axis=1)

    active = np.arange(N)
    for _ in range(max_iter):
        grad = B[active] @ G - Atp[active]
        step_num = np.einsum("ij,ij->i", grad, grad)
        step_den = np.einsum("ij,jk,ik->i", grad, G, grad)
        t = np.where(step_den > 0, step_num / np.maximum(step_den, 1e-300), 1.0)
        Bn = np.clip(B[active] - t[:, None] * grad, lower, upper)
        B[active] = Bn
        res = kkt_residual(B[active], Atp[active])
        still = res > tol * scale
        active = active[still]
        if active.size == 0:
            break

    # Ill-conditioned rows zig-zag under projected gradient; finish those
    # off with the exact bounded-variable least-squares active-set method.
    res = kkt_residual(B, Atp)
    for i in np.flatnonzero(res > tol * scale):
        sol = scipy.optimize.lsq_linear(A, P[i], bounds=(lower, upper), method="bvls")
        if sol.success or sol.cost <= 0.5 * np.linalg.norm(B[i] @ A.T - P[i]) ** 2:
            B[i] = np.clip(sol.x, lower, upper)

    res = kkt_residual(B, Atp)
    if np.any(res > 1000 * tol * scale):
        raise NonConvergence(
            f"box least squares stalled: max KKT residual {res.max():.3e}"
        )
    dist = np.linalg.norm(B @ A.T - P, axis=1)
    return B, dist


def box_constrained_least_squares(
    A: np.ndarray,
    p: np.ndarray,
    lower: float = 0.0,
    upper: float = 1.0,
    tol: float = 1e-10,
    max_iter: int = 20000,
) -> tuple[np.ndarray, float]:
    """Single right-hand-side wrapper around :func:`box_lsq_batch`.

    Returns (b, residual) where b minimizes ||A b - p|| over the box.
    """
    B, dist = box_lsq_batch(A, np.asarray(p, float)[None, :], lower, upper, tol, max_iter)
    return B[0], float(dist[0])


def _nnls_small(B: np.ndarray, y: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Lawson-Hanson NNLS min ||B mu - y|| over mu >= 0 for small dense B.

    scipy's nnls mishandles wide systems in some releases and its BVLS
    carries Python overhead that dominates at this size, so the textbook
    active-set loop is done directly in numpy.
    """
    d, p = B.shape
    mu = np.zeros(p)
    active = np.zeros(p, dtype=bool)
    resid = y.copy()
    scale = 1.0 + float(np.abs(B).max()) * (1.0 + float(np.abs(y).max()))
    for _ in range(3 * p + 10):
        w = B.T @ resid
        w[active] = -np.inf
        j = int(np.argmax(w))
        if w[j] <= tol * scale:
            break
        active[j] = True
        while True:
            idx = np.flatnonzero(active)
            sol, *_ = np.linalg.lstsq(B[:, idx], y, rcond=None)
            if sol.min(initial=1.0) > 0.0:
                mu[:] = 0.0
                mu[idx] = sol
                break
            # step toward the new solution until a variable hits zero
            cur = mu[idx]
            neg = sol <= 0.0
            alphas = cur[neg] / (cur[neg] - sol[neg])
            alpha = float(alphas.min())
            mu[idx] = cur + alpha * (sol - cur)
            drop = idx[mu[idx] <= tol]
            if drop.size == 0:
                drop = idx[np.argmin(mu[idx])][None]
            mu[drop] = 0.0
            active[drop] = False
            if not active.any():
                return np.zeros(p)
        resid = y - B[:, idx] @ mu[idx]
    return mu


def project_polyhedral_cone(v: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Project ``v`` onto the cone {u : rows @ u >= 0}.

    Via Moreau: the residual v - proj is the projection onto the polar cone
    {-rows.T @ mu : mu >= 0}, a nonnegative least-squares problem.
    """
    v = np.asarray(v, dtype=float)
    rows = np.atleast_2d(rows)
    if rows.size == 0 or np.all(rows @ v >= 0):
        return v
    mu = _nnls_small(rows.T, -v)
    return v + rows.T @ mu


# ---------------------------------------------------------------------------
# min-sum-of-norms cone programs
# ---------------------------------------------------------------------------


@dataclass
class MinSumNormsProblem:
    """A group-norm cone program built on a shared data matrix X (n x d).

    Block i couples to the rows through ``row_weights[i]`` (an n-vector a_i,
    typically a 0/1 mask, or a label-folded +-1 mask), giving the linear map
    F_i u_i = a_i * (X u_i). The program is

        margin mode:     min  sum_i ||u_i||   s.t.  sum_i F_i u_i >= 1
        penalized mode:  min  sum_j loss(s_j) + beta * sum_i ||u_i||,
                              s = sum_i F_i u_i

    optionally with per-block cone constraints diag(cone_signs[i]) X u_i >= 0
    (cone_signs rows are +-1; use ``cone_blocks`` to enable per block).
    """

    X: np.ndarray
    row_weights: np.ndarray  # k x n
    loss: LossModel
    mode: str = "margin"  # "margin" | "penalized"
    cone_signs: Optional[np.ndarray] = None  # k x n of +-1 where enabled
    cone_blocks: Optional[np.ndarray] = None  # bool (k,)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.row_weights = np.atleast_2d(np.asarray(self.row_weights, dtype=float))
        if self.row_weights.shape[1] != self.X.shape[0]:
            raise ValueError("row_weights must have one column per data row")
        if self.row_weights.shape[0] == 0:
            raise ValueError("need at least one block")
        if not np.any(self.row_weights != 0, axis=1).all():
            raise ValueError("every block needs a nonempty row coupling")
        if self.mode not in ("margin", "penalized"):
            raise ValueError(f"unknown mode {self.mode!r}")
        k = self.row_weights.shape[0]
        if self.cone_blocks is None:
            self.cone_blocks = np.zeros(k, dtype=bool) if self.cone_signs is None else np.ones(k, dtype=bool)
        self.cone_blocks = np.asarray(self.cone_blocks, dtype=bool)
        if self.cone_signs is not None:
            self.cone_signs = np.atleast_2d(np.asarray(self.cone_signs, dtype=float))

    @property
    def k(self) -> int:
        return self.row_weights.shape[0]

    @staticmethod
    def from_masks(X, masks, loss: Optional[LossModel] = None, mode: str = "margin"):
        """Build the plain masked program sum_i diag(b_i) X u_i >= 1."""
        return MinSumNormsProblem(
            X=X,
            row_weights=np.atleast_2d(np.asarray(masks, dtype=float)),
            loss=loss or LossModel.max_margin(),
            mode=mode,
        )


@dataclass
class MinSumNormsResult:
    value: float
    blocks: np.ndarray  # k x d
    lam: np.ndarray  # n, margin/loss dual (nonnegative)
    gap: float
    iterations: int
    dual_value: float


def _phase1_feasible(prob: MinSumNormsProblem) -> bool:
    """LP feasibility check for the margin system (with cone rows)."""
    X, RW = prob.X, prob.row_weights
    n, d = X.shape
    k = prob.k
    nv = k * d + 1  # u blocks flattened + slack t
    # margin rows: -sum_i a_i*(X u_i) - t <= -1
    A_margin = scipy.sparse.hstack(
        [scipy.sparse.csr_matrix(-RW[i][:, None] * X) for i in range(k)]
        + [scipy.sparse.csr_matrix(-np.ones((n, 1)))],
        format="csr",
    )
    mats = [A_margin]
    rhs = [-np.ones(n)]
    if prob.cone_signs is not None and prob.cone_blocks.any():
        cone_rows = []
        for i in range(k):
            if prob.cone_blocks[i]:
                cone_rows.append(scipy.sparse.csr_matrix(-prob.cone_signs[i][:, None] * X))
            else:
                cone_rows.append(None)
        blocks = scipy.sparse.block_diag(
            [r if r is not None else scipy.sparse.csr_matrix((0, d)) for r in cone_rows],
            format="csr",
        )
        pad = scipy.sparse.csr_matrix((blocks.shape[0], 1))
        mats.append(scipy.sparse.hstack([blocks, pad], format="csr"))
        rhs.append(np.zeros(blocks.shape[0]))
    A_ub = scipy.sparse.vstack(mats, format="csr")
    b_ub = np.concatenate(rhs)
    c = np.zeros(nv)
    c[-1] = 1.0
    res = scipy.optimize.linprog(
        c,
        A_ub=A_ub,
        b_ub=b_ub,
        bounds=[(None, None)] * (nv - 1) + [(0, None)],
        method="highs",
    )
    return res.status == 0 and res.fun is not None and res.fun <= 1e-7


CONE_FEAS_RTOL = 1e-11


def _repair_cones(prob: MinSumNormsProblem, U: np.ndarray) -> np.ndarray:
    """Project cone blocks of U onto their feasibility cones.

    Violations at roundoff scale (relative to the block) are left alone;
    the certification treats them as feasible.
    """
    if prob.cone_signs is None or not prob.cone_blocks.any():
        return U
    X = prob.X
    row_scale = 1.0 + np.linalg.norm(X, axis=1).max()
    U = U.copy()
    vals = prob.cone_signs * (U @ X.T)
    for i in np.flatnonzero(prob.cone_blocks):
        scale = row_scale * (1.0 + np.linalg.norm(U[i]))
        if vals[i].min() < -CONE_FEAS_RTOL * scale:
            rows = prob.cone_signs[i][:, None] * X
            u = project_polyhedral_cone(U[i], rows)
            if (rows @ u).min() >= -CONE_FEAS_RTOL * scale:
                U[i] = u
    return U


def _dual_block_values(
    prob: MinSumNormsProblem, lam: np.ndarray, floor: float = 0.0
) -> np.ndarray:
    """Per-block dual constraint values theta_i = sup_{u in K_i, |u|<=1} lam' F_i u.

    Plain blocks give ||F_i' lam||; cone blocks need the projection onto
    the cone, computed in decreasing order of the unprojected norm so that
    blocks which cannot change the maximum are skipped. With ``floor`` set,
    blocks whose unprojected norm stays below it are never projected (the
    caller only cares about values above the floor, e.g. a dual budget).
    """
    X = prob.X
    V = (prob.row_weights * lam[None, :]) @ X  # k x d, rows F_i' lam
    theta = np.linalg.norm(V, axis=1)
    if prob.cone_signs is not None and prob.cone_blocks.any():
        cone = np.flatnonzero(prob.cone_blocks)
        plain_max = theta[~prob.cone_blocks].max() if (~prob.cone_blocks).any() else 0.0
        order = cone[np.argsort(-theta[cone])]
        tmax = max(plain_max, floor)
        for i in order:
            if theta[i] <= tmax:  # projection never increases the norm
                continue
            rows = prob.cone_signs[i][:, None] * X
            theta[i] = np.linalg.norm(project_polyhedral_cone(V[i], rows))
            tmax = max(tmax, theta[i])
    return theta


def _cone_violation(prob, U) -> float:
    if prob.cone_signs is None or not prob.cone_blocks.any():
        return 0.0
    vals = prob.cone_signs * (U @ prob.X.T)
    row_scale = 1.0 + np.linalg.norm(prob.X, axis=1).max()
    scales = row_scale * (1.0 + np.linalg.norm(U, axis=1))
    rel = -(vals.min(axis=1)) / scales
    return float(max(rel.max(initial=0.0), 0.0))


def _certify(prob, U, lam_raw, beta_norm):
    """Return (primal value, dual value, feasible U, feasible lam)."""
    X, RW = prob.X, prob.row_weights
    loss = prob.loss
    U = _repair_cones(prob, U)
    cone_ok = _cone_violation(prob, U) <= 10 * CONE_FEAS_RTOL
    s = np.einsum("kn,kn->n", RW, U @ X.T)
    lam = np.maximum(lam_raw, 0.0)
    if prob.mode == "margin":
        smin = s.min() if s.size else 1.0
        if smin <= 1e-12 or not cone_ok:
            pval = math.inf
            U_feas = U
        else:
            U_feas = U / smin
            pval = float(np.linalg.norm(U_feas, axis=1).sum())
        theta = _dual_block_values(prob, lam)
        tmax = theta.max() if theta.size else 0.0
        lam_feas = lam / max(1.0, tmax)
        dval = float(lam_feas.sum())
        return pval, dval, U_feas, lam_feas
    # penalized
    if not cone_ok:
        return math.inf, -math.inf, U, lam
    pval = float(np.sum(loss.ell(s)) + beta_norm * np.linalg.norm(U, axis=1).sum())
    lam = np.minimum(lam, loss.box_upper)
    theta = _dual_block_values(prob, lam)
    tmax = theta.max() if theta.size else 0.0
    if tmax > beta_norm:
        lam = lam * (beta_norm / tmax)
    dval = float(np.sum(loss.g(lam)))
    return pval, dval, U, lam


def _block_support_direction(prob: MinSumNormsProblem, i: int, lam: np.ndarray):
    """The direction attaining sup_{u in K_i, |u|<=1} lam' F_i u."""
    v = prob.X.T @ (prob.row_weights[i] * lam)
    if prob.cone_signs is not None and prob.cone_blocks[i]:
        rows = prob.cone_signs[i][:, None] * prob.X
        v = project_polyhedral_cone(v, rows)
    nv = np.linalg.norm(v)
    return (v / nv, nv) if nv > 0 else (None, 0.0)


def _polish_direction_lp(prob: MinSumNormsProblem, U, beta_norm, block_rtol=1e-5, rounds=60):
    """Column generation over frozen block directions.

    With directions fixed, the margin program is the LP
    min sum t s.t. sum t_j (F_{i_j} v_j) >= 1, t >= 0 (the penalized hinge
    adds slack variables); its row duals lam price new directions. A block
    whose dual constraint sup_{u in K_i} lam' F_i u exceeds the budget
    contributes its maximizing direction as a fresh column, which is exact
    pricing, so the loop terminates at the true optimum of the full
    program whenever the splitting iterate seeded the right neighborhood.
    Directions are cone-feasible by construction, hence so is any
    nonnegative combination.
    """
    loss = prob.loss
    if prob.mode == "penalized" and loss.name != "hinge":
        return None
    X, RW = prob.X, prob.row_weights
    n = X.shape[0]
    unorms = np.linalg.norm(U, axis=1)
    act = np.flatnonzero(unorms > block_rtol * (1.0 + unorms.max()))
    if act.size == 0:
        return None
    Urep = _repair_cones(prob, U)
    cols: list[tuple[int, np.ndarray]] = []
    for i in act:
        nu = np.linalg.norm(Urep[i])
        if nu > 0:
            cols.append((int(i), Urep[i] / nu))
    if not cols:
        return None
    out = None
    for _ in range(rounds):
        M = np.stack([RW[i] * (X @ v) for i, v in cols], axis=1)  # n x ncols
        ncols = len(cols)
        if prob.mode == "margin":
            res = scipy.optimize.linprog(
                np.ones(ncols), A_ub=-M, b_ub=-np.ones(n),
                bounds=[(0, None)] * ncols, method="highs",
            )
            if res.status != 0:
                return out
            t = np.maximum(res.x, 0.0)
            lam = np.abs(np.asarray(res.ineqlin.marginals))
        else:
            c = np.concatenate([beta_norm * np.ones(ncols), np.ones(n)])
            res = scipy.optimize.linprog(
                c, A_ub=np.hstack([-M, -np.eye(n)]), b_ub=-np.ones(n),
                bounds=[(0, None)] * (ncols + n), method="highs",
            )
            if res.status != 0:
                return out
            t = np.maximum(res.x[:ncols], 0.0)
            lam = np.clip(np.abs(np.asarray(res.ineqlin.marginals)), 0.0, loss.box_upper)
        U_out = np.zeros_like(U)
        for (i, v), ti in zip(cols, t):
            U_out[i] += ti * v
        out = (U_out, lam)
        # exact pricing: add support directions of the most violated blocks
        budget = 1.0 if prob.mode == "margin" else beta_norm
        theta = _dual_block_values(prob, lam, floor=budget)
        worst = np.argsort(-theta)[:8]
        added = 0
        have = {(i, v.tobytes()) for i, v in cols}
        for i in worst:
            if theta[i] <= budget * (1.0 + 1e-12):
                continue
            v, nv = _block_support_direction(prob, int(i), lam)
            # nv is the exact constraint value; theta[i] may be a skipped
            # block's unprojected upper bound
            if v is None or nv <= budget * (1.0 + 1e-12):
                continue
            key = (int(i), v.tobytes())
            if key not in have and len(cols) < 400:
                cols.append((int(i), v))
                have.add(key)
                added += 1
        if added == 0:
            return out
    return out


def _polish_kkt(
    prob: MinSumNormsProblem, U, lam, muT, beta_norm,
    block_rtol=1e-5, row_rtol=1e-6, seen_keys=None,
):
    """Newton refinement of the KKT system on the active set ADMM identified.

    First-order splitting identifies which blocks, margin rows, and cone
    rows are active long before it reaches high accuracy; the KKT equations
    restricted to that structure are smooth and square, so a damped
    Gauss-Newton solve polishes the iterate to near machine precision.
    Returns a refined (U, lam) pair or None when the guess fails.
    """
    X, RW = prob.X, prob.row_weights
    n, d = X.shape
    loss = prob.loss
    lam = np.maximum(lam, 0.0)
    unorms = np.linalg.norm(U, axis=1)
    act_blocks = np.flatnonzero(unorms > block_rtol * (1.0 + unorms.max()))
    if act_blocks.size == 0:
        return None
    nA = act_blocks.size
    mode = prob.mode
    s = np.einsum("kn,kn->n", RW, U @ X.T)

    if mode == "margin":
        act_rows = np.flatnonzero(lam > row_rtol * (1.0 + lam.max()))
        if act_rows.size == 0:
            return None
    elif loss.name == "hinge":
        # rows sitting on the hinge kink carry the free multipliers
        act_rows = np.flatnonzero(np.abs(s - 1.0) < 100 * row_rtol)
        lam = np.clip(lam, 0.0, 1.0)
    else:
        act_rows = np.zeros(0, dtype=int)
    if seen_keys is not None:
        key = (act_blocks.tobytes(), act_rows.tobytes())
        if key in seen_keys:
            return None
        seen_keys.add(key)

    cone_rows: list[np.ndarray] = []
    has_cone = prob.cone_signs is not None
    for idx, i in enumerate(act_blocks):
        if has_cone and prob.cone_blocks[i]:
            vals = prob.cone_signs[i] * (X @ U[i])
            mu_i = muT[i] if muT is not None else np.zeros(n)
            act = np.flatnonzero(
                (np.abs(vals) < 1e-5 * (1.0 + unorms[i])) | (mu_i > 1e-6 * (1.0 + mu_i.max()))
            )
            cone_rows.append(act)
        else:
            cone_rows.append(np.zeros(0, dtype=int))

    nlam = act_rows.size
    ncone = [c.size for c in cone_rows]
    nvar = nA * d + nlam + sum(ncone)
    if nvar > 400 or nA > 60:
        return None  # numeric-Jacobian Newton is not worth it at this size

    def unpack(xv):
        Ua = xv[: nA * d].reshape(nA, d)
        lam_full = np.zeros(n)
        if mode == "margin" or loss.name == "hinge":
            lam_full[act_rows] = xv[nA * d : nA * d + nlam]
        mus = []
        off = nA * d + nlam
        for c in ncone:
            mus.append(xv[off : off + c])
            off += c
        return Ua, lam_full, mus

    def lam_of_s(sv, lam_full):
        if mode == "margin":
            return lam_full
        if loss.name == "hinge":
            out = np.where(sv < 1.0, 1.0, 0.0)
            out[act_rows] = lam_full[act_rows]
            return out
        return loss.dual_from_slope(sv)

    cone_mats = [
        prob.cone_signs[i][cone_rows[idx]][:, None] * X[cone_rows[idx]] if ncone[idx] else None
        for idx, i in enumerate(act_blocks)
    ]
    obj_scale = 1.0 if mode == "margin" else beta_norm
    RW_act = RW[act_blocks]

    def residual(xv):
        Ua, lam_full, mus = unpack(xv)
        P = Ua @ X.T  # nA x n
        sv = np.einsum("kn,kn->n", RW_act, P)
        lamv = lam_of_s(sv, lam_full)
        G = (RW_act * lamv[None, :]) @ X  # nA x d, rows F_i' lam
        for idx in range(nA):
            if ncone[idx]:
                G[idx] = G[idx] + cone_mats[idx].T @ mus[idx]
        nu = np.linalg.norm(Ua, axis=1)
        res = [(Ua - (nu / obj_scale)[:, None] * G).ravel()]
        if mode == "margin" or loss.name == "hinge":
            res.append(sv[act_rows] - 1.0)
        for idx in range(nA):
            if ncone[idx]:
                res.append(cone_mats[idx] @ Ua[idx])
        return np.concatenate(res) if res else np.zeros(0)

    x0 = np.concatenate(
        [U[act_blocks].ravel(), lam[act_rows] if nlam else np.zeros(0)]
        + [
            (muT[i][cone_rows[idx]] if muT is not None else np.zeros(ncone[idx]))
            for idx, i in enumerate(act_blocks)
        ]
    )
    if x0.size != nvar:
        return None
    F = residual(x0)
    if F.size != nvar:
        return None
    scale = 1.0 + np.abs(x0).max()
    x = x0
    stall = 0
    for _ in range(18):
        nrm = np.linalg.norm(F)
        if nrm <= 1e-12 * scale * math.sqrt(max(nvar, 1)):
            break
        J = np.empty((F.size, nvar))
        h = 1e-7 * scale
        for j in range(nvar):
            xp = x.copy()
            xp[j] += h
            J[:, j] = (residual(xp) - F) / h
        try:
            step, *_ = np.linalg.lstsq(J, -F, rcond=None)
        except np.linalg.LinAlgError:
            return None
        t = 1.0
        while t > 1e-4:
            Fn = residual(x + t * step)
            if np.linalg.norm(Fn) < nrm:
                break
            t *= 0.5
        else:
            return None
        stall = stall + 1 if np.linalg.norm(Fn) > 0.3 * nrm else 0
        if stall >= 4:
            return None
        x = x + t * step
        F = Fn
    if np.linalg.norm(F) > 1e-9 * scale * math.sqrt(max(nvar, 1)):
        return None
    Ua, lam_full, _ = unpack(x)
    U_out = np.zeros_like(U)
    U_out[act_blocks] = Ua
    sv = np.einsum("kn,kn->n", RW, U_out @ X.T)
    lam_out = np.maximum(lam_of_s(sv, lam_full), 0.0)
    if prob.mode == "penalized" and loss.name == "hinge":
        lam_out = np.minimum(lam_out, 1.0)
    return U_out, lam_out


def solve_min_sum_norms(
    prob: MinSumNormsProblem,
    tol: float = 1e-8,
    max_iter: int = 200000,
    rho: float = 1.0,
    check_every: int = 250,
) -> MinSumNormsResult:
    """Solve a min-sum-of-norms program by operator splitting (ADMM).

    Stops when the certified duality gap drops below tol * (1 + |value|).
    Margin mode runs an LP feasibility phase first and raises
    :class:`Infeasible` when the margin system has no solution;
    :class:`NonConvergence` signals an exhausted iteration budget.
    """
    X = prob.X
    RW = prob.row_weights
    n, d = X.shape
    k = prob.k
    loss = prob.loss
    beta_norm = 1.0 if prob.mode == "margin" else loss.beta
    if k > 512:
        check_every = max(check_every, 1000)  # certification cost grows with k
    if prob.mode == "margin" and not _phase1_feasible(prob):
        raise Infeasible("margin system has no feasible point")
    if prob.mode == "penalized" and (loss.ell is None or loss.prox is None):
        raise ValueError("penalized mode needs a LossModel with ell and prox")

    has_cone = prob.cone_signs is not None and bool(prob.cone_blocks.any())
    cone_idx = np.flatnonzero(prob.cone_blocks) if has_cone else np.array([], dtype=int)
    CS = prob.cone_signs[cone_idx] if has_cone else None

    # Prefactor the block and coupling systems. Cone blocks share
    # H = I + X'X because the cone sign matrix is orthogonal on rows.
    XtX = X.T @ X
    Hc = cho_factor(np.eye(d) + XtX) if has_cone else None
    gamma = np.zeros(k, dtype=bool)
    gamma[cone_idx] = True
    K0 = X @ X.T
    K1 = X @ cho_solve(Hc, X.T) if has_cone else None
    W0 = RW[~gamma]
    M = K0 * (W0.T @ W0) if W0.size else np.zeros((n, n))
    if has_cone:
        W1 = RW[gamma]
        M = M + K1 * (W1.T @ W1)
    Sfac = cho_factor(np.eye(n) + M)

    def hsolve(R):
        # apply H_i^{-1} block-wise
        if not has_cone:
            return R
        out = R.copy()
        out[gamma] = cho_solve(Hc, R[gamma].T).T
        return out

    U = np.zeros((k, d))
    w = np.zeros((k, d))
    z = np.ones(n) if prob.mode == "margin" else np.zeros(n)
    T = np.zeros((cone_idx.size, n)) if has_cone else None
    aw = np.zeros((k, d))
    az = np.zeros(n)
    aT = np.zeros((cone_idx.size, n)) if has_cone else None
    s = np.zeros(n)
    w_prev = w
    z_prev = z
    T_prev = T

    best = None  # (gap_rel, pval, dval, U_feas, lam_feas, iteration)
    thresh = beta_norm / rho
    next_polish = 6 * check_every  # let easy instances certify on their own first
    polish_tries = 0
    adapt_left = 60

    it = 0
    while it < max_iter:
        it += 1
        # --- U step: coupled least squares via the (I + M) system
        zhat = z - az
        R = ((RW * zhat[None, :]) @ X) + (w - aw)
        if has_cone:
            R[cone_idx] += (CS * (T - aT)) @ X
        Q = hsolve(R)
        b = np.einsum("kn,kn->n", RW, Q @ X.T)
        s = cho_solve(Sfac, b)
        U = Q - hsolve((RW * s[None, :]) @ X)
        s = np.einsum("kn,kn->n", RW, U @ X.T)

        # --- proximal steps
        w_prev, z_prev, T_prev = w, z, T
        p_in = U + aw
        norms = np.linalg.norm(p_in, axis=1)
        shrink = np.maximum(0.0, 1.0 - thresh / np.maximum(norms, 1e-300))
        w = p_in * shrink[:, None]
        zin = s + az
        if prob.mode == "margin":
            z = np.maximum(zin, 1.0)
        else:
            z = loss.prox(zin, rho)
        if has_cone:
            Vc = CS * (U[cone_idx] @ X.T)
            T = np.maximum(Vc + aT, 0.0)

        # --- dual updates
        aw += U - w
        az += s - z
        if has_cone:
            aT += Vc - T

        if it % check_every == 0 or it == max_iter:
            lam_raw = -rho * az
            pval, dval, U_feas, lam_feas = _certify(prob, U, lam_raw, beta_norm)
            if math.isfinite(pval):
                gap = pval - dval
                rel = gap / (1.0 + abs(pval))
                if best is None or rel < best[0]:
                    best = (rel, pval, dval, U_feas, lam_feas, it)
                if rel <= tol:
                    return MinSumNormsResult(
                        value=pval,
                        blocks=U_feas,
                        lam=lam_feas,
                        gap=gap,
                        iterations=it,
                        dual_value=dval,
                    )
            if best is not None and best[0] <= 0.2 and it >= next_polish:
                # the splitting has identified the active structure; polish
                # the best certified point so far, backing off on failure
                polish_tries += 1
                next_polish = it + 4 * check_every * min(polish_tries, 8)
                muT_full = None
                if has_cone:
                    muT_full = np.zeros((k, n))
                    muT_full[cone_idx] = rho * aT
                U_seed, lam_seed = best[3], best[4]
                done = None
                seen_keys: set = set()
                candidates = []
                for block_rtol in (1e-4, 1e-2):
                    lp = _polish_direction_lp(prob, U_seed, beta_norm, block_rtol)
                    if lp is not None:
                        candidates.append(lp)
                for cand in candidates:
                    p2, d2, U2, lam2 = _certify(prob, cand[0], cand[1], beta_norm)
                    if not math.isfinite(p2):
                        continue
                    rel2 = (p2 - d2) / (1.0 + abs(p2))
                    if rel2 < best[0]:
                        best = (rel2, p2, d2, U2, lam2, it)
                    if rel2 <= tol:
                        done = MinSumNormsResult(
                            value=p2, blocks=U2, lam=lam2,
                            gap=p2 - d2, iterations=it, dual_value=d2,
                        )
                        break
                if done is not None:
                    return done
                for block_rtol in (1e-4, 1e-2, 1e-6):
                    for row_rtol in (1e-6, 1e-3, 1e-2):
                        pol = _polish_kkt(
                            prob, U_seed, lam_seed, muT_full, beta_norm,
                            block_rtol, row_rtol, seen_keys,
                        )
                        if pol is None:
                            continue
                        p2, d2, U2, lam2 = _certify(prob, pol[0], pol[1], beta_norm)
                        if not math.isfinite(p2):
                            continue
                        rel2 = (p2 - d2) / (1.0 + abs(p2))
                        if rel2 < best[0]:
                            best = (rel2, p2, d2, U2, lam2, it)
                        if rel2 <= tol:
                            done = MinSumNormsResult(
                                value=p2, blocks=U2, lam=lam2,
                                gap=p2 - d2, iterations=it, dual_value=d2,
                            )
                            break
                    if done is not None:
                        return done
            # adapt the step scale by primal/dual residual balance; freeze
            # once the gap is closing so the contraction is not reset
            if adapt_left > 0 and (best is None or best[0] > 1e-3):
                r_pri = np.linalg.norm(U - w) + np.linalg.norm(s - z)
                r_dua = rho * (np.linalg.norm(w - w_prev) + np.linalg.norm(z - z_prev))
                if has_cone:
                    r_pri += np.linalg.norm(Vc - T)
                    r_dua += rho * np.linalg.norm(T - T_prev)
                new_rho = rho
                if r_pri > 10 * r_dua:
                    new_rho = min(rho * 2.0, 1e6)
                elif r_dua > 10 * r_pri:
                    new_rho = max(rho / 2.0, 1e-6)
                if new_rho != rho:
                    adapt_left -= 1
                    adj = rho / new_rho
                    aw *= adj
                    az *= adj
                    if has_cone:
                        aT *= adj
                    rho = new_rho
            thresh = beta_norm / rho

    if best is not None and best[0] <= 100 * tol:
        _, pval, dval, U_feas, lam_feas, itb = best
        return MinSumNormsResult(
            value=pval,
            blocks=U_feas,
            lam=lam_feas,
            gap=pval - dval,
            iterations=max_iter,
            dual_value=dval,
        )
    raise NonConvergence(
        f"min-sum-of-norms splitting did not certify gap <= {tol:g} in {max_iter} iterations"
        + (f" (best relative gap {best[0]:.3e})" if best else "")
    )


# ---------------------------------------------------------------------------
# ellipsoid method
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeparationOracle:
    """Membership test returning None for Inside or a cut (g, h).

    A cut means every point of the body satisfies g @ lam <= h while the
    query point violates it (strictly, up to the oracle's own tolerance).
    """

    test: Callable[[np.ndarray], Optional[tuple[np.ndarray, float]]]

    def __call__(self, lam: np.ndarray):
        return self.test(lam)


@dataclass
class EllipsoidConfig:
    """Initial radius, target accuracy, and iteration budget.

    The budget must respect the standard volume argument,
    max_iter >= 2 n (n+1) ln(R / eps); the constructor fills in that bound
    (plus slack) when max_iter is omitted.
    """

    radius: float
    eps: float
    dim: int
    max_iter: Optional[int] = None

    def __post_init__(self):
        if self.radius <= 0 or self.eps <= 0:
            raise ValueError("radius and eps must be positive")
        n = self.dim
        bound = 2.0 * n * (n + 1) * max(1.0, math.log(self.radius / self.eps))
        if self.max_iter is None:
            self.max_iter = int(math.ceil(bound)) + 64
        elif self.max_iter < bound:
            raise ValueError(
                f"max_iter={self.max_iter} below the volume bound {math.ceil(bound)}"
            )


def _objective_pair(objective, n):
    if callable(objective):
        raise TypeError("pass a vector or a (value, gradient) tuple")
    if isinstance(objective, tuple):
        fval, fgrad = objective
        return fval, fgrad
    c = np.asarray(objective, dtype=float)

    def fval(x):
        return float(c @ x)

    def fgrad(x):
        return c

    return fval, fgrad


def ellipsoid_maximize(
    objective,
    oracle: SeparationOracle,
    dim: int,
    cfg: EllipsoidConfig,
    box_upper: Optional[float] = None,
    track_volume: bool = False,
):
    """Maximize a linear (or concave) objective over {lam >= 0} cap body cap box.

    ``objective`` is a vector c for the linear case or a (value, gradient)
    callable pair for a concave objective. Returns (lam, info) where info
    holds the certified optimality gap and iteration count; raises
    :class:`IterationExhausted` when no feasible point could be certified
    within eps by the iteration budget.
    """
    fval, fgrad = _objective_pair(objective, dim)
    n = dim
    if n == 1:
        return _ellipsoid_1d(fval, fgrad, oracle, cfg, box_upper, track_volume)

    x = np.zeros(n)
    A = (cfg.radius**2) * np.eye(n)
    best_x = None
    best_val = -math.inf
    certified = False
    logvol = []
    cur_logdet = n * math.log(cfg.radius**2)

    it = 0
    while it < cfg.max_iter:
        it += 1
        g = None
        h = 0.0
        j = int(np.argmin(x))
        if x[j] < 0:
            g = np.zeros(n)
            g[j] = -1.0
            h = 0.0
        elif box_upper is not None and x.max() > box_upper:
            j = int(np.argmax(x))
            g = np.zeros(n)
            g[j] = 1.0
            h = box_upper
        else:
            cut = oracle(x)
            if cut is not None:
                g, h = cut
                g = np.asarray(g, dtype=float)
            else:
                val = fval(x)
                if val > best_val:
                    best_val = val
                    best_x = x.copy()
                gobj = np.asarray(fgrad(x), dtype=float)
                width = math.sqrt(max(float(gobj @ A @ gobj), 0.0))
                if val + width <= best_val + cfg.eps:
                    certified = True
                    break
                g = -gobj
                h = -val

        gAg = float(g @ A @ g)
        if gAg <= 1e-300:
            certified = best_x is not None
            break
        sq = math.sqrt(gAg)
        alpha = (float(g @ x) - h) / sq
        if alpha >= 1.0:
            # the remaining ellipsoid is entirely cut away
            certified = best_x is not None
            break
        if alpha < -1.0 / n:
            continue
        Ag = A @ g / sq
        tau = (1.0 + n * alpha) / (n + 1.0)
        delta = (n * n / (n * n - 1.0)) * (1.0 - alpha * alpha)
        sigma = 2.0 * (1.0 + n * alpha) / ((n + 1.0) * (1.0 + alpha))
        x = x - tau * Ag
        A = delta * (A - sigma * np.outer(Ag, Ag))
        A = 0.5 * (A + A.T)
        if track_volume:
            cur_logdet += n * math.log(delta) + math.log(max(1.0 - sigma, 1e-300))
            logvol.append(0.5 * cur_logdet)

    if best_x is None or not certified:
        raise IterationExhausted(
            "ellipsoid exhausted its budget"
            + (f" (best feasible value {best_val:.6g})" if best_x is not None else " with no feasible point")
        )
    info = {"value": best_val, "iterations": it, "log_volumes": logvol, "certified": certified}
    return best_x, info


def _ellipsoid_1d(fval, fgrad, oracle, cfg, box_upper, track_volume):
    lo, hi = 0.0, cfg.radius
    if box_upper is not None:
        hi = min(hi, box_upper)
    best_x, best_val = None, -math.inf
    logvol = []
    it = 0
    while it < cfg.max_iter and hi - lo > 1e-18:
        it += 1
        x = 0.5 * (lo + hi)
        cut = oracle(np.array([x]))
        if cut is not None:
            g, h = cut
            if g[0] > 0:
                hi = min(hi, h / g[0])
            elif g[0] < 0:
                lo = max(lo, h / g[0])
            else:
                break
        else:
            val = fval(np.array([x]))
            if val > best_val:
                best_val, best_x = val, np.array([x])
            gr = float(np.asarray(fgrad(np.array([x])))[0])
            if gr >= 0:
                lo = x
            else:
                hi = x
            if abs(gr) * (hi - lo) <= cfg.eps:
                break
        if track_volume:
            logvol.append(math.log(max(hi - lo, 1e-300)))
    if best_x is None:
        raise IterationExhausted("ellipsoid (1-D) found no feasible point")
    return best_x, {
        "value": best_val,
        "iterations": it,
        "log_volumes": logvol,
        "certified": True,
    }
