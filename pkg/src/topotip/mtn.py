"""Assembly of measure topological networks from point clouds.

A network bundles a squared-distance kernel with uniform point mass, the
retained 1-dimensional persistence pairs embedded as (birth, death) rows with
uniform cycle mass, and the binary point-cycle incidence matrix built from
representative cycles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .persistence import build_vr_filtration, compute_persistence, top_k_pairs
from .point_data import PointCloud, pairwise_sq_dist


@dataclass(frozen=True)
class MtnConfig:
    hom_dim: int = 1
    max_cycles: int = 20

    def validate(self) -> None:
        if self.hom_dim != 1:
            raise ValueError("only hom_dim = 1 is supported")
        if self.max_cycles < 0:
            raise ValueError("max_cycles must be >= 0")


@dataclass(frozen=True)
class MeasureTopologicalNetwork:
    kernel: np.ndarray
    mu: np.ndarray
    diagram: np.ndarray
    nu: np.ndarray
    incidence: np.ndarray
    source_cloud: PointCloud

    @property
    def n_points(self) -> int:
        return self.kernel.shape[0]

    @property
    def n_cycles(self) -> int:
        return self.diagram.shape[0]


def build_mtn(
    cloud: PointCloud, hom_dim: int = 1, max_cycles: int = 20
) -> MeasureTopologicalNetwork:
    """Build the measure topological network of a cloud.

    Retains the ``max_cycles`` most persistent finite pairs of dimension
    ``hom_dim``; the incidence column of a cycle has ones exactly on its
    representative vertices. A cycle-free cloud yields an N x 0 incidence and
    an empty cycle measure.
    """
    if hom_dim != 1:
        raise ValueError("only hom_dim = 1 is supported")
    kernel = pairwise_sq_dist(cloud)
    filt = build_vr_filtration(kernel, max_dim=hom_dim + 1)
    diag = compute_persistence(filt)
    retained = top_k_pairs(diag, hom_dim, max_cycles).pairs

    n = cloud.n_points
    m = len(retained)
    diagram = np.array([[p.birth, p.death] for p in retained], dtype=np.float64)
    diagram = diagram.reshape(m, 2)
    incidence = np.zeros((n, m), dtype=np.float64)
    for j, pair in enumerate(retained):
        members = sorted(pair.representative)
        if not members:
            raise ValueError("finite 1-cycle without representative vertices")
        incidence[members, j] = 1.0
    mu = np.full(n, 1.0 / n)
    nu = np.full(m, 1.0 / m) if m > 0 else np.empty(0, dtype=np.float64)
    return MeasureTopologicalNetwork(kernel, mu, diagram, nu, incidence, cloud)
