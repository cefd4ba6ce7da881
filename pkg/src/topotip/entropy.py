"""Hypergraph entropies over point-cycle incidence matrices.

Vertex- and hyperedge-perspective entropies are Shannon entropies (natural
log) of the degree and size distributions over the active vertex and
hyperedge sets; their normalized convex combination is the symmetric
hypergraph entropy. The spectral entropy of the incidence Gram matrix is kept
as a comparison baseline. The point-level field propagates per-cycle entropy
changes between a reference and an aligned target incidence back onto the
target vertices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class HypergraphEntropySummary:
    he_v: float
    he_e: float
    he_sym: float
    n_active_vertices: int
    n_active_edges: int
    degenerate: bool


@dataclass(frozen=True)
class EntropyField:
    """Per-vertex scores from propagated cycle-entropy changes."""

    scores: np.ndarray
    per_cycle_delta: np.ndarray
    degenerate: bool = False


def active_sets(omega: np.ndarray):
    """Index arrays of vertices with positive degree and edges with positive size."""
    omega = np.asarray(omega, dtype=np.float64)
    degrees = omega.sum(axis=1)
    sizes = omega.sum(axis=0)
    return np.nonzero(degrees > 0)[0], np.nonzero(sizes > 0)[0]


def _shannon(weights: np.ndarray) -> float:
    total = weights.sum()
    if total <= 0:
        return 0.0
    p = weights / total
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def he_vertex(omega: np.ndarray) -> float:
    """Vertex-perspective entropy: Shannon entropy of active vertex degrees.

    Degenerate (no incidences) evaluates to 0.
    """
    omega = np.asarray(omega, dtype=np.float64)
    degrees = omega.sum(axis=1)
    return _shannon(degrees[degrees > 0])


def he_edge(omega: np.ndarray) -> float:
    """Hyperedge-perspective entropy: Shannon entropy of active hyperedge sizes."""
    omega = np.asarray(omega, dtype=np.float64)
    sizes = omega.sum(axis=0)
    return _shannon(sizes[sizes > 0])


def he_sym(omega: np.ndarray, gamma: float = 0.5) -> float:
    """Convex combination of the normalized vertex and edge entropies.

    A single active vertex or hyperedge makes its normalized term 1 (the
    uniform limit where entropy and normalizer both vanish); an empty active
    set is degenerate and evaluates to 0.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    v_act, e_act = active_sets(omega)
    if len(v_act) == 0 or len(e_act) == 0:
        return 0.0
    term_v = 1.0 if len(v_act) == 1 else he_vertex(omega) / math.log(len(v_act))
    term_e = 1.0 if len(e_act) == 1 else he_edge(omega) / math.log(len(e_act))
    return gamma * term_v + (1.0 - gamma) * term_e


def hypergraph_entropies(omega: np.ndarray, gamma: float = 0.5) -> HypergraphEntropySummary:
    """All three entropies with the active-set sizes and a degeneracy flag.

    Degenerate means fewer than two active vertices or hyperedges, where the
    normalizers of the symmetric entropy stop being informative.
    """
    v_act, e_act = active_sets(omega)
    return HypergraphEntropySummary(
        he_v=he_vertex(omega),
        he_e=he_edge(omega),
        he_sym=he_sym(omega, gamma),
        n_active_vertices=len(v_act),
        n_active_edges=len(e_act),
        degenerate=(len(v_act) < 2 or len(e_act) < 2),
    )


def spectral_entropy(omega: np.ndarray) -> float:
    """Shannon entropy (base 2) of the trace-normalized spectrum of omega @ omega.T.

    Eigenvalues below 1e-12 of the trace count as exact zeros; a zero trace is
    degenerate and evaluates to 0.
    """
    omega = np.asarray(omega, dtype=np.float64)
    if omega.shape[0] < 1:
        raise ValueError("need at least one vertex")
    gram = omega @ omega.T
    trace = float(np.trace(gram))
    if trace <= 0:
        return 0.0
    eigvals = np.linalg.eigvalsh(gram)
    eigvals = eigvals[eigvals > 1e-12 * trace]
    p = eigvals / trace
    return float(-np.sum(p * np.log2(p)))


def align_cycles(pi_e: np.ndarray, method: str = "argmax") -> np.ndarray:
    """Assignment matrix aligning target cycles to reference cycles.

    Reference cycles index the rows of pi_e (diagonal slots in the last
    row/column). Reference cycle j gets the target cycle holding its largest
    coupling mass (ties to the lowest index); a cycle whose argmax is the
    diagonal slot stays unmatched (zero column). ``method="assignment"``
    solves an exact linear assignment over the real block instead.
    """
    pi_e = np.asarray(pi_e, dtype=np.float64)
    m = pi_e.shape[0] - 1
    mp = pi_e.shape[1] - 1
    A = np.zeros((mp, m))
    if m == 0 or pi_e.shape[1] == 0:
        return A
    if method == "argmax":
        for j in range(m):
            v = int(np.argmax(pi_e[j, :]))
            if v < mp:
                A[v, j] = 1.0
    elif method == "assignment":
        if mp > 0:
            rows, cols = linear_sum_assignment(-pi_e[:m, :mp])
            slot = pi_e[:m, mp]
            for j, v in zip(rows, cols):
                if pi_e[j, v] >= slot[j]:
                    A[v, j] = 1.0
    else:
        raise ValueError(f"unknown alignment method {method!r}")
    return A


def point_level_field(
    omega_ref: np.ndarray,
    omega_tgt: np.ndarray,
    assignment: np.ndarray,
    eps: float = 1e-12,
) -> EntropyField:
    """Vertex-level field of absolute cycle-entropy change.

    Columns of the reference and the aligned target incidence are normalized
    (with +eps in the denominator) into vertex distributions; each cycle's
    entropy is normalized by log of its vertex count, and the absolute entropy
    change is propagated to target vertices by their aligned memberships.
    A single-vertex side leaves the normalizer undefined: the field is then
    flagged degenerate with zero scores.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    omega_ref = np.asarray(omega_ref, dtype=np.float64)
    omega_tgt = np.asarray(omega_tgt, dtype=np.float64)
    n, m = omega_ref.shape
    n_t = omega_tgt.shape[0]
    if assignment.shape != (omega_tgt.shape[1], m):
        raise ValueError("assignment shape must be (target cycles, reference cycles)")
    if m == 0:
        return EntropyField(np.zeros(n_t), np.empty(0))
    if n < 2 or n_t < 2:
        return EntropyField(np.zeros(n_t), np.zeros(m), degenerate=True)

    omega_hat = omega_tgt @ assignment
    P = omega_ref / (omega_ref.sum(axis=0) + eps)
    P_hat = omega_hat / (omega_hat.sum(axis=0) + eps)

    def col_entropy(Pmat, size):
        with np.errstate(divide="ignore", invalid="ignore"):
            logp = np.where(Pmat > 0, np.log(Pmat), 0.0)
        return -(Pmat * logp).sum(axis=0) / math.log(size)

    H = col_entropy(P, n)
    H_hat = col_entropy(P_hat, n_t)
    delta = H_hat - H
    scores = P_hat @ np.abs(delta)
    return EntropyField(scores, delta)


def save_field(coords: np.ndarray, field: EntropyField, path) -> None:
    """Dump a point-level field as CSV: point_id,x0..x{d-1},score."""
    coords = np.asarray(coords)
    d = coords.shape[1]
    with open(path, "w") as fh:
        fh.write("point_id," + ",".join(f"x{k}" for k in range(d)) + ",score\n")
        for i in range(coords.shape[0]):
            xs = ",".join("%.17g" % v for v in coords[i])
            fh.write("%d,%s,%.17g\n" % (i, xs, field.scores[i]))
