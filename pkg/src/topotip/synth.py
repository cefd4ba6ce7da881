"""Generators for the benchmark systems: stationary-density MCMC and a swarm model.

The Metropolis-Hastings sampler draws from densities proportional to
exp(-V/T) with a Gaussian random-walk proposal mixed with an antipodal flip
move (x -> -x). Both benchmark potentials are even, so the flip is always
accepted and mixes symmetric modes that a pure random walk cannot cross at
low temperature; the proposal mixture stays symmetric, so detailed balance is
untouched. The swarm integrator advances self-propelled particles with
friction and a pairwise Morse-type interaction and snapshots 4D phase-space
clouds (positions and velocities).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .point_data import PointCloud, SequenceDataset

_KIND_CODES = {"rvp": 0, "double_well": 1, "gaussian": 2}


class IntegrationError(ArithmeticError):
    """The particle integration produced a non-finite state."""

    def __init__(self, step: int):
        super().__init__(f"non-finite particle state at step {step}")
        self.step = step


@dataclass(frozen=True)
class PotentialSpec:
    """A 2D potential family member: rvp, double_well, or the gaussian harness."""

    kind: str
    h: float = 0.0
    T: float = 1.0

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.T <= 0:
            raise ValueError("T must be positive")

    def energy(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.kind == "rvp":
            r2 = x[:, 0] ** 2 + x[:, 1] ** 2
            return 0.5 * r2**2 + self.h * r2
        if self.kind == "double_well":
            return (x[:, 0] ** 2 - self.h) ** 2 + x[:, 1] ** 2
        return 0.5 * (x[:, 0] ** 2 + x[:, 1] ** 2)


@dataclass(frozen=True)
class DorsognaParams:
    """Self-propelled particle parameters (mill regime by default, mass 1)."""

    n_particles: int = 300
    self_prop: float = 1.6
    friction: float = 0.5
    attract_strength: float = 0.5
    attract_range: float = 2.0
    repel_strength: float = 1.0
    repel_range: float = 0.5
    dt: float = 1e-2
    snapshot_times: tuple = field(default_factory=lambda: tuple(np.linspace(1.0, 60.0, 61)))

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        for name in ("attract_strength", "attract_range", "repel_strength", "repel_range"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if len(self.snapshot_times) < 1:
            raise ValueError("need at least one snapshot time")
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))


@njit(cache=True)
def _potential(kind, h, x0, x1):
    if kind == 0:
        r2 = x0 * x0 + x1 * x1
        return 0.5 * r2 * r2 + h * r2
    if kind == 1:
        d = x0 * x0 - h
        return d * d + x1 * x1
    return 0.5 * (x0 * x0 + x1 * x1)


@njit(cache=True)
def _mh_chain(kind, h, T, n, burn_in, thin, step_scale, flip_prob, seed):
    np.random.seed(seed)
    x0 = np.random.normal(0.0, 1.0)
    x1 = np.random.normal(0.0, 1.0)
    v = _potential(kind, h, x0, x1)
    gap = thin if thin > 0 else 1
    out = np.empty((n, 2))
    total = burn_in + n * gap
    taken = 0
    for step in range(total):
        if np.random.random() < flip_prob:
            p0 = -x0
            p1 = -x1
        else:
            p0 = x0 + step_scale * np.random.normal()
            p1 = x1 + step_scale * np.random.normal()
        vp = _potential(kind, h, p0, p1)
        if vp <= v or np.random.random() < np.exp(-(vp - v) / T):
            x0 = p0
            x1 = p1
            v = vp
        if step >= burn_in and (step - burn_in) % gap == gap - 1:
            out[taken, 0] = x0
            out[taken, 1] = x1
            taken += 1
    return out


def sample_mh(
    spec: PotentialSpec,
    n: int,
    burn_in: int = 5000,
    thin: int = 200,
    step_scale: float = 0.25,
    seed: int = 0,
    flip_prob: float = 0.2,
) -> PointCloud:
    """Draw n samples from the density proportional to exp(-V/T).

    Gaussian random-walk proposal of standard deviation ``step_scale``, mixed
    with the antipodal flip at rate ``flip_prob``; acceptance ratio
    exp(-(V' - V)/T) clipped at 1. Deterministic for a given seed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if burn_in < 0 or thin < 0:
        raise ValueError("burn_in and thin must be >= 0")
    if step_scale <= 0:
        raise ValueError("step_scale must be positive")
    if not 0.0 <= flip_prob < 1.0:
        raise ValueError("flip_prob must lie in [0, 1)")
    coords = _mh_chain(
        _KIND_CODES[spec.kind],
        float(spec.h),
        float(spec.T),
        n,
        burn_in,
        thin,
        step_scale,
        flip_prob,
        np.uint32(seed & 0xFFFFFFFF),
    )
    return PointCloud(coords, frame_param=spec.h)


def _frame_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(index,)).generate_state(1)[0])


def make_sequence(
    kind: str,
    h_grid,
    T: float,
    n: int,
    seed: int = 0,
    **mh_kwargs,
) -> SequenceDataset:
    """One independent chain per grid value; frame_param records the h value."""
    h_grid = list(h_grid)
    if not h_grid:
        raise ValueError("h_grid must be nonempty")
    frames = []
    for i, h in enumerate(h_grid):
        spec = PotentialSpec(kind, h=float(h), T=T)
        frames.append(sample_mh(spec, n, seed=_frame_seed(seed, i), **mh_kwargs))
    return SequenceDataset(tuple(frames))


@njit(cache=True)
def _dorsogna_accel(pos, vel, self_prop, friction, ca, la, cr, lr, acc):
    n = pos.shape[0]
    for i in range(n):
        sp2 = vel[i, 0] * vel[i, 0] + vel[i, 1] * vel[i, 1]
        coef = self_prop - friction * sp2
        acc[i, 0] = coef * vel[i, 0]
        acc[i, 1] = coef * vel[i, 1]
    for i in range(n):
        for j in range(i + 1, n):
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            r = np.sqrt(dx * dx + dy * dy)
            if r < 1e-9:
                continue
            # dU/dr for U(r) = cr e^{-r/lr} - ca e^{-r/la}
            dudr = -(cr / lr) * np.exp(-r / lr) + (ca / la) * np.exp(-r / la)
            fx = -dudr * dx / r
            fy = -dudr * dy / r
            acc[i, 0] += fx
            acc[i, 1] += fy
            acc[j, 0] -= fx
            acc[j, 1] -= fy


@njit(cache=True)
def _dorsogna_run(
    pos, vel, dt, n_steps, snap_steps, self_prop, friction, ca, la, cr, lr
):
    n = pos.shape[0]
    n_snap = snap_steps.shape[0]
    snaps = np.empty((n_snap, n, 4))
    acc = np.empty((n, 2))
    acc_new = np.empty((n, 2))
    vel_pred = np.empty((n, 2))
    _dorsogna_accel(pos, vel, self_prop, friction, ca, la, cr, lr, acc)
    snap_idx = 0
    bad_step = -1
    for step in range(n_steps + 1):
        while snap_idx < n_snap and snap_steps[snap_idx] == step:
            for i in range(n):
                snaps[snap_idx, i, 0] = pos[i, 0]
                snaps[snap_idx, i, 1] = pos[i, 1]
                snaps[snap_idx, i, 2] = vel[i, 0]
                snaps[snap_idx, i, 3] = vel[i, 1]
            snap_idx += 1
        if step == n_steps:
            break
        for i in range(n):
            pos[i, 0] += vel[i, 0] * dt + 0.5 * acc[i, 0] * dt * dt
            pos[i, 1] += vel[i, 1] * dt + 0.5 * acc[i, 1] * dt * dt
            vel_pred[i, 0] = vel[i, 0] + acc[i, 0] * dt
            vel_pred[i, 1] = vel[i, 1] + acc[i, 1] * dt
        _dorsogna_accel(pos, vel_pred, self_prop, friction, ca, la, cr, lr, acc_new)
        ok = True
        for i in range(n):
            vel[i, 0] += 0.5 * (acc[i, 0] + acc_new[i, 0]) * dt
            vel[i, 1] += 0.5 * (acc[i, 1] + acc_new[i, 1]) * dt
            acc[i, 0] = acc_new[i, 0]
            acc[i, 1] = acc_new[i, 1]
            if not (
                np.isfinite(pos[i, 0])
                and np.isfinite(pos[i, 1])
                and np.isfinite(vel[i, 0])
                and np.isfinite(vel[i, 1])
            ):
                ok = False
        if not ok:
            bad_step = step
            break
    return snaps, snap_idx, bad_step


def simulate_dorsogna(params: DorsognaParams, seed: int = 0) -> SequenceDataset:
    """Integrate the swarm and snapshot 4D phase-space clouds (x, y, vx, vy).

    Velocity-Verlet-style update with a velocity predictor for the
    speed-dependent propulsion force; particle count is conserved and a
    non-finite state raises IntegrationError naming the step.
    """
    rng = np.random.default_rng(seed)
    n = params.n_particles
    radius = 2.5 * np.sqrt(max(n, 1) / 300.0)
    ang = rng.uniform(0.0, 2.0 * np.pi, n)
    rad = radius * np.sqrt(rng.uniform(0.0, 1.0, n))
    pos = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
    speed = np.sqrt(params.self_prop / params.friction)
    vdir = rng.uniform(0.0, 2.0 * np.pi, n)
    vmag = speed * rng.uniform(0.3, 1.0, n)
    vel = np.stack([vmag * np.cos(vdir), vmag * np.sin(vdir)], axis=1)

    times = np.array(params.snapshot_times, dtype=np.float64)
    snap_steps = np.round(times / params.dt).astype(np.int64)
    order = np.argsort(snap_steps, kind="stable")
    n_steps = int(snap_steps.max())

    snaps, taken, bad_step = _dorsogna_run(
        pos,
        vel,
        params.dt,
        n_steps,
        snap_steps[order],
        params.self_prop,
        params.friction,
        params.attract_strength,
        params.attract_range,
        params.repel_strength,
        params.repel_range,
    )
    if bad_step >= 0:
        raise IntegrationError(bad_step)
    frames = [None] * len(times)
    for k in range(taken):
        src = int(order[k])
        frames[src] = PointCloud(snaps[k], frame_param=times[src])
    return SequenceDataset(tuple(frames))
