"""Geodesic reconstruction between coupled clouds and the indicator curves.

Between two clouds with a solved point coupling, intermediate states come
from linearly interpolating matched squared-distance matrices, embedding with
classical MDS, and rigidly aligning against the pointwise blend of the
endpoint clouds. Persistence along the path is recomputed from the embedded
coordinates, so every intermediate network reflects loops that actually exist
in the reconstructed geometry. The curve drivers evaluate each intermediate
network against a reference network and record distortions and entropies on a
global timeline.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .entropy import hypergraph_entropies
from .mtn import MeasureTopologicalNetwork, MtnConfig, build_mtn
from .persistence import entropy_of_lengths
from .point_data import PointCloud, SequenceDataset, pairwise_sq_dist, resample
from .tpot import TpotConfig, solve_tpot


class MatchingError(ValueError):
    """The point coupling cannot be turned into a matching."""


@dataclass(frozen=True)
class IndicatorRow:
    tau: float
    l_geom: float
    l_topo: float
    l_hyper: float
    pe: float
    he_v: float
    he_e: float
    he_sym: float
    converged: bool
    n_cycles: int


@dataclass(frozen=True)
class SolveStats:
    tau: float
    max_marginal_violation: float
    n_outer: int
    converged: bool


_TABLE_HEADER = [
    "tau",
    "L_geom",
    "L_topo",
    "L_hyper",
    "PE",
    "HE_V",
    "HE_E",
    "HE_sym",
    "converged",
    "n_cycles",
]


@dataclass
class IndicatorTable:
    rows: list = field(default_factory=list)
    solver_stats: list = field(default_factory=list)

    def validate(self) -> None:
        taus = [r.tau for r in self.rows]
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise ValueError("tau column must be strictly increasing")

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=np.float64)

    @property
    def taus(self) -> np.ndarray:
        return self.column("tau")

    def save(self, path) -> None:
        self.validate()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_TABLE_HEADER)
            for r in self.rows:
                writer.writerow(
                    ["%.17g" % v for v in (
                        r.tau, r.l_geom, r.l_topo, r.l_hyper,
                        r.pe, r.he_v, r.he_e, r.he_sym,
                    )]
                    + [str(int(r.converged)), str(r.n_cycles)]
                )

    @classmethod
    def load(cls, path) -> "IndicatorTable":
        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != _TABLE_HEADER:
                raise ValueError(f"unexpected indicator header: {header}")
            for rec in reader:
                vals = [float(v) for v in rec[:8]]
                rows.append(
                    IndicatorRow(*vals, converged=bool(int(rec[8])), n_cycles=int(rec[9]))
                )
        return cls(rows)


def extract_matching(pi_v: np.ndarray, method: str = "argmax") -> np.ndarray:
    """Per-source target indices from a point coupling.

    Default is the row-wise argmax with ties to the lowest column;
    ``method="assignment"`` solves an exact assignment instead (validation
    switch, needs at least as many targets as sources).
    """
    pi_v = np.asarray(pi_v, dtype=np.float64)
    if np.any(pi_v.max(axis=1) <= 0.0):
        raise MatchingError("coupling has an all-zero row (failed solve?)")
    if method == "argmax":
        return np.argmax(pi_v, axis=1)
    if method == "assignment":
        n, m = pi_v.shape
        if n > m:
            raise MatchingError("assignment matching needs n_source <= n_target")
        rows, cols = linear_sum_assignment(-pi_v)
        out = np.empty(n, dtype=np.int64)
        out[rows] = cols
        return out
    raise ValueError(f"unknown matching method {method!r}")


def interpolate_sq_dist(
    ka: np.ndarray, kb: np.ndarray, m: np.ndarray, t: float
) -> np.ndarray:
    """Linear blend of squared-distance matrices through a matching."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    return (1.0 - t) * ka + t * kb[np.ix_(m, m)]


def classical_mds(k_t: np.ndarray, d: int) -> PointCloud:
    """Classical MDS embedding of a squared-distance matrix into R^d.

    Double-centers, takes the top-d eigenpairs, and clamps negative
    eigenvalues to zero, so non-embeddable inputs still yield coordinates.
    """
    k_t = np.asarray(k_t, dtype=np.float64)
    n = k_t.shape[0]
    if k_t.shape != (n, n) or not np.allclose(k_t, k_t.T, atol=1e-9):
        raise ValueError("need a symmetric square matrix")
    if d < 1:
        raise ValueError("d must be >= 1")
    rm = k_t.mean(axis=1)
    B = -0.5 * (k_t - rm[:, None] - rm[None, :] + rm.mean())
    B = 0.5 * (B + B.T)
    w, v = np.linalg.eigh(B)
    idx = np.argsort(w)[::-1][:d]
    lam = np.clip(w[idx], 0.0, None)
    coords = v[:, idx] * np.sqrt(lam)[None, :]
    if coords.shape[1] < d:
        coords = np.hstack([coords, np.zeros((n, d - coords.shape[1]))])
    return PointCloud(coords)


def procrustes_align(X: PointCloud, ref: PointCloud) -> PointCloud:
    """Best rigid (proper rotation + translation) alignment of X onto ref."""
    if X.coords.shape != ref.coords.shape:
        raise ValueError("clouds must share N and d")
    xm = X.coords.mean(axis=0)
    rm = ref.coords.mean(axis=0)
    xc = X.coords - xm
    rc = ref.coords - rm
    U, _, Vt = np.linalg.svd(xc.T @ rc)
    R = U @ Vt
    if np.linalg.det(R) < 0:
        U = U.copy()
        U[:, -1] *= -1.0
        R = U @ Vt
    return PointCloud(xc @ R + rm, X.frame_param, X.labels)


def reconstruct_frame(
    cloud_a: PointCloud,
    cloud_b: PointCloud,
    pi_v: np.ndarray,
    t: float,
    matching_method: str = "argmax",
) -> PointCloud:
    """Reconstruct the intermediate cloud at local time t between two clouds.

    Matching extraction, squared-distance interpolation, MDS into the ambient
    dimension, then rigid alignment against the pointwise blend of the
    endpoints (the alignment anchor).
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    if cloud_a.dim != cloud_b.dim:
        raise ValueError("clouds must share the ambient dimension")
    m = extract_matching(pi_v, matching_method)
    ka = pairwise_sq_dist(cloud_a)
    kb = pairwise_sq_dist(cloud_b)
    k_t = interpolate_sq_dist(ka, kb, m, t)
    emb = classical_mds(k_t, cloud_a.dim)
    anchor = (1.0 - t) * cloud_a.coords + t * cloud_b.coords[m]
    param = None
    if cloud_a.frame_param is not None and cloud_b.frame_param is not None:
        param = (1.0 - t) * cloud_a.frame_param + t * cloud_b.frame_param
    aligned = procrustes_align(emb, PointCloud(anchor))
    return PointCloud(aligned.coords, param)


def _indicator_row(ref_net, net, tau, cfg, gamma):
    coupling, dist = solve_tpot(ref_net, net, cfg)
    pe = 0.0
    if net.n_cycles > 0:
        pe = entropy_of_lengths(net.diagram[:, 1] - net.diagram[:, 0])
    ents = hypergraph_entropies(net.incidence, gamma)
    row = IndicatorRow(
        tau, dist.geom, dist.topo, dist.hyper,
        pe, ents.he_v, ents.he_e, ents.he_sym,
        coupling.converged, net.n_cycles,
    )
    stats = SolveStats(
        tau, coupling.max_marginal_violation, coupling.n_outer, coupling.converged
    )
    return row, stats


def _common_size_frames(frames, resample_to, seed):
    sizes = {f.n_points for f in frames}
    if resample_to is None and len(sizes) == 1:
        return list(frames)
    target = resample_to if resample_to is not None else min(sizes)
    return [resample(f, target, seed + i) for i, f in enumerate(frames)]


def baseline_curves(
    seq: SequenceDataset,
    cfg: TpotConfig | None = None,
    mtn_cfg: MtnConfig | None = None,
    gamma: float = 0.5,
    resample_to: int | None = None,
    resample_seed: int = 0,
) -> IndicatorTable:
    """Evaluate every frame directly against the first-frame reference.

    Row i holds the distortions of the solve between the reference network
    and frame i's network together with frame i's own entropies, at global
    time tau = i / (T - 1).
    """
    if seq.n_frames < 2:
        raise ValueError("need at least two frames")
    mtn_cfg = mtn_cfg or MtnConfig()
    mtn_cfg.validate()
    frames = seq.frames
    if resample_to is not None:
        frames = [resample(f, resample_to, resample_seed + i) for i, f in enumerate(frames)]
    nets0 = build_mtn(frames[0], mtn_cfg.hom_dim, mtn_cfg.max_cycles)
    table = IndicatorTable()
    T = len(frames)
    for i, frame in enumerate(frames):
        net = nets0 if i == 0 else build_mtn(frame, mtn_cfg.hom_dim, mtn_cfg.max_cycles)
        tau = i / (T - 1)
        row, stats = _indicator_row(nets0, net, tau, cfg, gamma)
        table.rows.append(row)
        table.solver_stats.append(stats)
    table.validate()
    return table


def dynamic_curves(
    seq: SequenceDataset,
    keyframe_idx: list,
    L: int,
    cfg: TpotConfig | None = None,
    mtn_cfg: MtnConfig | None = None,
    gamma: float = 0.5,
    reference: str = "global",
    matching_method: str = "argmax",
    resample_to: int | None = None,
    resample_seed: int = 0,
) -> IndicatorTable:
    """Reconstruction-based indicator curves from sparse keyframes.

    For each adjacent keyframe pair the point coupling is solved once; L
    reconstructed states per segment (local times l/L for l = 1..L) are
    re-networked and evaluated against the reference. Global times follow
    tau* = (i + t - 1) / (T - 1) over T keyframes, with a leading
    self-comparison row at tau* = 0. ``reference="segment"`` evaluates each
    segment against its own left keyframe instead of the global first frame.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    keyframe_idx = list(keyframe_idx)
    if len(keyframe_idx) < 2:
        raise ValueError("need at least two keyframes")
    if any(b <= a for a, b in zip(keyframe_idx, keyframe_idx[1:])):
        raise ValueError("keyframes must be strictly increasing")
    if keyframe_idx[0] < 0 or keyframe_idx[-1] >= seq.n_frames:
        raise ValueError("keyframe index out of range")
    if reference not in ("global", "segment"):
        raise ValueError("reference must be 'global' or 'segment'")
    mtn_cfg = mtn_cfg or MtnConfig()
    mtn_cfg.validate()

    frames = _common_size_frames(
        [seq.frames[k] for k in keyframe_idx], resample_to, resample_seed
    )
    nets = [build_mtn(f, mtn_cfg.hom_dim, mtn_cfg.max_cycles) for f in frames]
    T = len(frames)

    table = IndicatorTable()
    row, stats = _indicator_row(nets[0], nets[0], 0.0, cfg, gamma)
    table.rows.append(row)
    table.solver_stats.append(stats)

    for i in range(1, T):
        seg_coupling, _ = solve_tpot(nets[i - 1], nets[i], cfg)
        ref_net = nets[0] if reference == "global" else nets[i - 1]
        for ell in range(1, L + 1):
            t = ell / L
            tau_star = (i - 1 + t) / (T - 1)
            cloud_t = reconstruct_frame(
                frames[i - 1], frames[i], seg_coupling.pi_v, t, matching_method
            )
            net_t = build_mtn(cloud_t, mtn_cfg.hom_dim, mtn_cfg.max_cycles)
            row, stats = _indicator_row(ref_net, net_t, tau_star, cfg, gamma)
            table.rows.append(row)
            table.solver_stats.append(stats)
    table.validate()
    return table
