"""Entropic topological optimal transport between measure topological networks.

Couples two networks with a point coupling pi_v (relational squared-loss term
on the kernels), an augmented cycle coupling pi_e (squared Wasserstein term on
diagram coordinates with diagonal slots for unmatched cycles), and a
point-cycle incidence term contracted against both couplings. The solver
alternates log-domain Sinkhorn updates on the two couplings, each against the
linearized cost with the other coupling held fixed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .mtn import MeasureTopologicalNetwork


class TpotNumericalError(ArithmeticError):
    """The solve produced a non-finite objective."""


@dataclass
class TpotConfig:
    alpha: float = 0.5
    beta: float = 1.0
    eps_v: float = 0.003
    eps_e: float = 0.01
    outer_iters: int = 50
    sinkhorn_iters: int = 2000
    tol: float = 1e-6
    p: int = 2

    def validate(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.beta < 0.0:
            raise ValueError("beta must be >= 0")
        if self.eps_v <= 0.0 or self.eps_e <= 0.0:
            raise ValueError("regularization weights must be positive")
        if self.outer_iters < 1 or self.sinkhorn_iters < 1:
            raise ValueError("iteration counts must be >= 1")
        if self.p != 2:
            raise ValueError("only p = 2 is supported")


@dataclass
class CouplingPair:
    """The two couplings of a solve plus solver diagnostics.

    pi_e is (M+1) x (M'+1); its last row and column are the diagonal slots.
    """

    pi_v: np.ndarray
    pi_e: np.ndarray
    converged: bool = True
    max_marginal_violation: float = 0.0
    n_outer: int = 0
    objective_trace: list = field(default_factory=list)


@dataclass(frozen=True)
class DistortionBreakdown:
    geom: float
    topo: float
    hyper: float
    objective: float


def _lse_refresh(C, a, b, eps, f, g):
    """One exact log-domain double update of the dual potentials.

    Log-sum-exp with max subtraction repairs arbitrarily infeasible warm
    duals (for example after the linearized cost changed between outer
    iterations), after which the kernel-domain loop cannot overflow.
    """
    K = (g[None, :] - C) / eps
    mx = K.max(axis=1)
    with np.errstate(under="ignore"):
        f[:] = eps * (
            np.log(a) - (mx + np.log(np.exp(K - mx[:, None]).sum(axis=1)))
        )
        K2 = (f[:, None] - C) / eps
        mx2 = K2.max(axis=0)
        g[:] = eps * (
            np.log(b) - (mx2 + np.log(np.exp(K2 - mx2[None, :]).sum(axis=0)))
        )


@njit(cache=True)
def _rebuild_gibbs(C, f, g, eps, Kb):
    # exponents are <= 0 after an LSE refresh; deep negatives underflow to an
    # honest 0.0 (clamping them would feed starved rows fake mass and stall)
    n, m = C.shape
    for i in range(n):
        fi = f[i]
        for j in range(m):
            e = (fi + g[j] - C[i, j]) / eps
            if e > 50.0:
                e = 50.0
            Kb[i, j] = np.exp(e)


@njit(cache=True)
def _sinkhorn_stabilized(C, a, b, eps, f, g, max_iter, tol, check_every):
    """Kernel-domain Sinkhorn with absorption into the dual potentials f, g.

    Scalings u, v stay O(1); whenever they drift they are absorbed into the
    duals and the Gibbs kernel is rebuilt, which keeps tiny regularization
    weights stable. f, g are updated in place (price units); the coupling is
    exp((f + g - C) / eps) once u = v = 1.
    """
    n, m = C.shape
    Kb = np.empty((n, m))
    _rebuild_gibbs(C, f, g, eps, Kb)
    u = np.ones(n)
    v = np.ones(m)
    it = 0
    prev_err = 1e300
    stalled = 0
    for it in range(1, max_iter + 1):
        for i in range(n):
            s = 0.0
            for j in range(m):
                s += Kb[i, j] * v[j]
            if s <= 0.0:
                s = 1e-300
            u[i] = a[i] / s
        for j in range(m):
            s = 0.0
            for i in range(n):
                s += Kb[i, j] * u[i]
            if s <= 0.0:
                s = 1e-300
            v[j] = b[j] / s
        drift = 0.0
        for i in range(n):
            au = abs(np.log(u[i]))
            if au > drift:
                drift = au
        for j in range(m):
            av = abs(np.log(v[j]))
            if av > drift:
                drift = av
        if drift > 200.0:
            for i in range(n):
                f[i] += eps * np.log(u[i])
                u[i] = 1.0
            for j in range(m):
                g[j] += eps * np.log(v[j])
                v[j] = 1.0
            _rebuild_gibbs(C, f, g, eps, Kb)
            continue
        if it % check_every == 0 or it == max_iter:
            # columns are exact right after the v-update; rows carry the error
            err = 0.0
            for i in range(n):
                s = 0.0
                for j in range(m):
                    s += Kb[i, j] * v[j]
                d = abs(u[i] * s - a[i])
                if d > err:
                    err = d
            if err < tol:
                break
            # degenerate near-ties contract arbitrarily slowly; stop once the
            # error makes under 1% progress per window for several windows
            # (the caller rounds to feasibility afterwards)
            if err > 0.99 * prev_err:
                stalled += 1
                if stalled >= 5:
                    break
            else:
                stalled = 0
            prev_err = err
    for i in range(n):
        f[i] += eps * np.log(u[i])
    for j in range(m):
        g[j] += eps * np.log(v[j])
    return it


def sinkhorn_log(C, a, b, eps, max_iter=2000, tol=1e-9, f=None, g=None, round_output=True):
    """Log-stabilized Sinkhorn for marginals a, b (equal positive total mass).

    Returns (P, f, g, violation, n_iter); f, g are dual potentials so
    P = exp((f[:, None] + g[None, :] - C) / eps), reusable as warm starts.
    Cold starts anneal the regularization down from a mild value to the
    target, carrying the duals across stages. By default the output coupling
    is rounded exactly onto the transport polytope (the correction is bounded
    by the pre-rounding marginal error); the returned violation is the max
    absolute row/column marginal error of the coupling handed back.
    """
    C = np.asarray(C, dtype=np.float64)
    n, m = C.shape
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    cold = f is None and g is None
    f = np.zeros(n) if f is None else f.astype(np.float64).copy()
    g = np.zeros(m) if g is None else g.astype(np.float64).copy()

    total_it = 0
    if cold and n * m > 1:
        span = float(C.max() - C.min())
        e = span / 10.0
        while e > eps * 1.5:
            _lse_refresh(C, a, b, e, f, g)
            total_it += _sinkhorn_stabilized(C, a, b, e, f, g, 60, tol, 10)
            e = max(e / 3.0, eps)

    _lse_refresh(C, a, b, eps, f, g)
    total_it += _sinkhorn_stabilized(C, a, b, eps, f, g, max_iter, tol, 10)
    with np.errstate(under="ignore"):
        P = np.exp((f[:, None] + g[None, :] - C) / eps)
    if round_output:
        P = _round_to_polytope(P, a, b)
    violation = float(
        max(np.max(np.abs(P.sum(axis=1) - a)), np.max(np.abs(P.sum(axis=0) - b)))
    )
    return P, f, g, violation, total_it


def _round_to_polytope(P, a, b):
    """Project a near-feasible coupling exactly onto the transport polytope.

    Scale rows then columns down where they overshoot, then distribute the
    leftover mass as a rank-one correction; the objective shift is bounded by
    the pre-rounding marginal violation.
    """
    rs = P.sum(axis=1)
    P = P * np.minimum(a / np.maximum(rs, 1e-300), 1.0)[:, None]
    cs = P.sum(axis=0)
    P = P * np.minimum(b / np.maximum(cs, 1e-300), 1.0)[None, :]
    err_r = a - P.sum(axis=1)
    err_c = b - P.sum(axis=0)
    total = err_r.sum()
    if total > 1e-300:
        P = P + np.outer(err_r, err_c) / total
    return P


def topo_cost_matrix(diag_a: np.ndarray, diag_b: np.ndarray) -> np.ndarray:
    """Augmented squared-distance cost between diagrams.

    Entry (u, v) of the real block is the squared Euclidean distance of the
    (birth, death) points; the slot cost of a point is the squared distance to
    its diagonal projection, (death - birth)^2 / 2; the slot-slot corner is 0.
    """
    diag_a = np.asarray(diag_a, dtype=np.float64).reshape(-1, 2)
    diag_b = np.asarray(diag_b, dtype=np.float64).reshape(-1, 2)
    m, mp = diag_a.shape[0], diag_b.shape[0]
    cost = np.zeros((m + 1, mp + 1))
    if m and mp:
        diff_b = diag_a[:, None, 0] - diag_b[None, :, 0]
        diff_d = diag_a[:, None, 1] - diag_b[None, :, 1]
        cost[:m, :mp] = diff_b**2 + diff_d**2
    if m:
        cost[:m, mp] = (diag_a[:, 1] - diag_a[:, 0]) ** 2 / 2.0
    if mp:
        cost[m, :mp] = (diag_b[:, 1] - diag_b[:, 0]) ** 2 / 2.0
    return cost


def geom_cost_apply(ka: np.ndarray, kb: np.ndarray, C: np.ndarray) -> np.ndarray:
    """The squared-loss relational cost tensor applied to a coupling.

    out[i, i'] = sum_{j, j'} (ka[i, j] - kb[i', j'])^2 C[j, j'], computed with
    the exact three-term expansion instead of the quartic loop.
    """
    r = C.sum(axis=1)
    c = C.sum(axis=0)
    return (ka**2) @ r[:, None] + (c @ (kb**2).T)[None, :] - 2.0 * ka @ C @ kb.T


def augment_incidence(omega: np.ndarray) -> np.ndarray:
    """Append the all-zero diagonal-slot column to an incidence matrix."""
    n, m = omega.shape
    out = np.zeros((n, m + 1))
    out[:, :m] = omega
    return out


def hyper_cost_apply(omega_a_aug, omega_b_aug, pi_e) -> np.ndarray:
    """Incidence mismatch cost contracted with the cycle coupling.

    With zero-padded incidence columns the four-case cost collapses to
    (1/2)(omega[i, u] - omega'[i', u'])^2 for all augmented (u, u'); the result
    is the N x N' linearized cost facing the point coupling.
    """
    re = pi_e.sum(axis=1)
    ce = pi_e.sum(axis=0)
    quad_a = 0.5 * (omega_a_aug**2) @ re
    quad_b = 0.5 * (omega_b_aug**2) @ ce
    cross = omega_a_aug @ pi_e @ omega_b_aug.T
    return quad_a[:, None] + quad_b[None, :] - cross


def hyper_cost_apply_cycles(omega_a_aug, omega_b_aug, pi_v) -> np.ndarray:
    """The transpose contraction: incidence cost facing the cycle coupling."""
    rv = pi_v.sum(axis=1)
    cv = pi_v.sum(axis=0)
    quad_a = 0.5 * (omega_a_aug**2).T @ rv
    quad_b = 0.5 * (omega_b_aug**2).T @ cv
    cross = omega_a_aug.T @ pi_v @ omega_b_aug
    return quad_a[:, None] + quad_b[None, :] - cross


def augmented_cycle_measures(m: int, mp: int):
    """Augmented cycle marginals: uniform real mass 1 plus a mass-1 slot.

    When one side has no cycles its single slot absorbs the full opposite
    mass, which forces the coupling; returns (nu_a, nu_b, forced_pi_e) with
    forced_pi_e None when a Sinkhorn solve is required.
    """
    if m == 0 and mp == 0:
        return np.array([1.0]), np.array([1.0]), np.array([[1.0]])
    if m == 0:
        nu_b = np.concatenate([np.full(mp, 1.0 / mp), [1.0]])
        return np.array([2.0]), nu_b, nu_b[None, :].copy()
    if mp == 0:
        nu_a = np.concatenate([np.full(m, 1.0 / m), [1.0]])
        return nu_a, np.array([2.0]), nu_a[:, None].copy()
    nu_a = np.concatenate([np.full(m, 1.0 / m), [1.0]])
    nu_b = np.concatenate([np.full(mp, 1.0 / mp), [1.0]])
    return nu_a, nu_b, None


def evaluate_distortions(
    P: MeasureTopologicalNetwork,
    Q: MeasureTopologicalNetwork,
    coupling: CouplingPair,
    alpha: float = 0.5,
    beta: float = 1.0,
) -> DistortionBreakdown:
    """Plug fixed couplings into the three distortion sums, unregularized.

    Values are reported in the networks' original units; the weighted
    objective is alpha*geom + (1-alpha)*topo + beta*hyper.
    """
    pi_v, pi_e = coupling.pi_v, coupling.pi_e
    geom = float(np.sum(geom_cost_apply(P.kernel, Q.kernel, pi_v) * pi_v))
    topo = float(np.sum(topo_cost_matrix(P.diagram, Q.diagram) * pi_e))
    om_a = augment_incidence(P.incidence)
    om_b = augment_incidence(Q.incidence)
    hyper = float(np.sum(hyper_cost_apply(om_a, om_b, pi_e) * pi_v))
    geom = max(geom, 0.0)
    topo = max(topo, 0.0)
    hyper = max(hyper, 0.0)
    objective = alpha * geom + (1.0 - alpha) * topo + beta * hyper
    return DistortionBreakdown(geom, topo, hyper, objective)


def _kl(P, ref_a, ref_b):
    # generalized KL with the 0 log 0 = 0 convention; ref is strictly positive
    ref = np.outer(ref_a, ref_b)
    pos = P > 0
    ent = float(np.sum(P[pos] * (np.log(P[pos]) - np.log(ref[pos]))))
    return ent - float(P.sum()) + float(ref.sum())


def solve_tpot(
    P: MeasureTopologicalNetwork,
    Q: MeasureTopologicalNetwork,
    cfg: TpotConfig | None = None,
) -> tuple[CouplingPair, DistortionBreakdown]:
    """Alternating entropic solve of the coupled transport problem.

    Costs stay in the networks' original units; the stabilized Sinkhorn
    (absorption plus cold-start annealing) keeps the exponentials in range
    for any data scale. A block update that would raise the regularized
    objective is damped by a line search toward the previous iterate, so the
    accepted trajectory is non-increasing; the loop stops when the objective
    settles within tol, no damped step improves it, or the outer cap is
    reached. The returned couplings are the best iterate rounded exactly
    onto the transport polytope; the breakdown excludes the regularization
    terms.
    """
    if cfg is None:
        cfg = TpotConfig()
    cfg.validate()

    ka = P.kernel
    kb = Q.kernel
    mu_a, mu_b = P.mu, Q.mu
    om_a = augment_incidence(P.incidence)
    om_b = augment_incidence(Q.incidence)
    topo_cost = topo_cost_matrix(P.diagram, Q.diagram)
    nu_a, nu_b, forced_pi_e = augmented_cycle_measures(P.n_cycles, Q.n_cycles)

    pi_v = np.outer(mu_a, mu_b)
    pi_e = forced_pi_e if forced_pi_e is not None else np.outer(nu_a, nu_b) / 2.0

    def reg_objective(pv, pe, grad_geom):
        geom = float(np.sum(grad_geom * pv))
        topo = float(np.sum(topo_cost * pe))
        hyper = float(np.sum(hyper_cost_apply(om_a, om_b, pe) * pv))
        obj = cfg.alpha * geom + (1.0 - cfg.alpha) * topo + cfg.beta * hyper
        obj += cfg.eps_v * _kl(pv, mu_a, mu_b)
        if forced_pi_e is None:
            obj += cfg.eps_e * _kl(pe, nu_a, nu_b)
        return obj

    grad_geom = geom_cost_apply(ka, kb, pi_v)
    obj = reg_objective(pi_v, pi_e, grad_geom)
    trace = [obj]
    converged = False
    f_v = g_v = f_e = g_e = None
    sink_tol = min(1e-9, cfg.tol)

    it = 0
    for it in range(1, cfg.outer_iters + 1):
        cost_v = cfg.alpha * grad_geom
        if cfg.beta > 0.0:
            cost_v = cost_v + cfg.beta * hyper_cost_apply(om_a, om_b, pi_e)
        pi_v_new, f_v, g_v, _, _ = sinkhorn_log(
            cost_v, mu_a, mu_b, cfg.eps_v, cfg.sinkhorn_iters, sink_tol,
            f_v, g_v, round_output=False,
        )
        if forced_pi_e is None:
            cost_e = (1.0 - cfg.alpha) * topo_cost
            if cfg.beta > 0.0:
                cost_e = cost_e + cfg.beta * hyper_cost_apply_cycles(
                    om_a, om_b, pi_v_new
                )
            pi_e_new, f_e, g_e, _, _ = sinkhorn_log(
                cost_e, nu_a, nu_b, cfg.eps_e, cfg.sinkhorn_iters, sink_tol,
                f_e, g_e, round_output=False,
            )
        else:
            pi_e_new = pi_e

        grad_geom_new = geom_cost_apply(ka, kb, pi_v_new)
        new_obj = reg_objective(pi_v_new, pi_e_new, grad_geom_new)
        if not np.isfinite(new_obj):
            raise TpotNumericalError("non-finite objective during solve")
        if new_obj > obj:
            # the linearized block update overshot; damp toward the previous
            # iterate until it improves
            improved = False
            for theta in (0.5, 0.25, 0.1, 0.03, 0.01):
                pv = (1.0 - theta) * pi_v + theta * pi_v_new
                pe = (1.0 - theta) * pi_e + theta * pi_e_new
                gg = geom_cost_apply(ka, kb, pv)
                cand = reg_objective(pv, pe, gg)
                if cand < obj:
                    pi_v_new, pi_e_new, grad_geom_new, new_obj = pv, pe, gg, cand
                    improved = True
                    break
            if not improved:
                converged = True
                break
        delta = obj - new_obj
        pi_v, pi_e, obj = pi_v_new, pi_e_new, new_obj
        grad_geom = grad_geom_new
        trace.append(obj)
        if delta < cfg.tol * max(1.0, abs(obj)):
            converged = True
            break

    pi_v = _round_to_polytope(pi_v, mu_a, mu_b)
    if forced_pi_e is None:
        pi_e = _round_to_polytope(pi_e, nu_a, nu_b)
    max_violation = max(
        float(np.abs(pi_v.sum(axis=1) - mu_a).max()),
        float(np.abs(pi_v.sum(axis=0) - mu_b).max()),
        float(np.abs(pi_e.sum(axis=1) - nu_a).max()) if forced_pi_e is None else 0.0,
        float(np.abs(pi_e.sum(axis=0) - nu_b).max()) if forced_pi_e is None else 0.0,
    )
    coupling = CouplingPair(
        pi_v,
        pi_e,
        converged=converged,
        max_marginal_violation=max_violation,
        n_outer=it,
        objective_trace=trace,
    )
    breakdown = evaluate_distortions(P, Q, coupling, cfg.alpha, cfg.beta)
    if not np.isfinite(breakdown.objective):
        raise TpotNumericalError("non-finite distortions after solve")
    return coupling, breakdown


def save_coupling(pi: np.ndarray, path) -> None:
    """Dump a coupling as CSV rows i,j,mass (debugging aid)."""
    with open(path, "w") as fh:
        fh.write("i,j,mass\n")
        for i in range(pi.shape[0]):
            for j in range(pi.shape[1]):
                fh.write("%d,%d,%.17g\n" % (i, j, pi[i, j]))
