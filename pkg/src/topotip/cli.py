"""Command-line surface: data generation, indicator runs, and self-checks.

Exit codes: 0 success, 2 configuration error, 3 input error, 4 numerical
failure. Every run writes the fully resolved configuration as JSON next to
its outputs, and output files are written atomically. The optional
environment variable TOPOTIP_MAX_THREADS caps per-label worker threads in
region-labeled runs.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .entropy import align_cycles, point_level_field, save_field
from .geodesic import (
    IndicatorTable,
    MatchingError,
    baseline_curves,
    classical_mds,
    dynamic_curves,
    procrustes_align,
    reconstruct_frame,
)
from .mtn import MtnConfig, build_mtn
from .point_data import (
    PointCloud,
    SequenceDataset,
    SequenceParseError,
    SequenceSchemaError,
    load_sequence,
    save_sequence,
    standardize,
)
from .synth import (
    DorsognaParams,
    IntegrationError,
    make_sequence,
    sample_mh,
    simulate_dorsogna,
    PotentialSpec,
)
from .tpot import TpotConfig, TpotNumericalError, sinkhorn_log, solve_tpot

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_NUMERICAL = 4


def _atomic_write(path, write_fn):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    os.close(fd)
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _echo_config(out_path, command, resolved: dict) -> None:
    payload = {"command": command, **resolved}
    _atomic_write(
        str(out_path) + ".config.json",
        lambda tmp: open(tmp, "w").write(json.dumps(payload, indent=2, sort_keys=True) + "\n"),
    )


def _solver_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--alpha", type=float, default=0.5)
    parser.add_argument("--beta", type=float, default=1.0)
    parser.add_argument("--eps-v", type=float, default=0.003)
    parser.add_argument("--eps-e", type=float, default=0.01)
    parser.add_argument("--gamma", type=float, default=0.5)
    parser.add_argument("--max-cycles", type=int, default=20)
    parser.add_argument("--hom-dim", type=int, default=1)
    parser.add_argument("--outer-iters", type=int, default=50)
    parser.add_argument("--sinkhorn-iters", type=int, default=200)
    parser.add_argument("--tol", type=float, default=1e-7)
    parser.add_argument("--resample-to", type=int, default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--exact-matching",
        action="store_true",
        help="use an exact assignment instead of the argmax matching (validation)",
    )
    parser.add_argument(
        "--no-standardize",
        action="store_true",
        help="skip per-coordinate standardization in the region-labeled path",
    )


@dataclass
class RunConfig:
    alpha: float
    beta: float
    eps_v: float
    eps_e: float
    gamma: float
    max_cycles: int
    hom_dim: int
    outer_iters: int
    sinkhorn_iters: int
    tol: float
    resample_to: int | None
    seed: int
    exact_matching: bool
    standardize_labeled: bool

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        cfg = cls(
            alpha=args.alpha,
            beta=args.beta,
            eps_v=args.eps_v,
            eps_e=args.eps_e,
            gamma=args.gamma,
            max_cycles=args.max_cycles,
            hom_dim=args.hom_dim,
            outer_iters=args.outer_iters,
            sinkhorn_iters=args.sinkhorn_iters,
            tol=args.tol,
            resample_to=args.resample_to,
            seed=args.seed,
            exact_matching=args.exact_matching,
            standardize_labeled=not args.no_standardize,
        )
        cfg.tpot().validate()
        cfg.mtn().validate()
        if not 0.0 <= cfg.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if cfg.resample_to is not None and cfg.resample_to < 1:
            raise ValueError("resample-to must be >= 1")
        return cfg

    def tpot(self) -> TpotConfig:
        return TpotConfig(
            alpha=self.alpha,
            beta=self.beta,
            eps_v=self.eps_v,
            eps_e=self.eps_e,
            outer_iters=self.outer_iters,
            sinkhorn_iters=self.sinkhorn_iters,
            tol=self.tol,
        )

    def mtn(self) -> MtnConfig:
        return MtnConfig(hom_dim=self.hom_dim, max_cycles=self.max_cycles)

    @property
    def matching_method(self) -> str:
        return "assignment" if self.exact_matching else "argmax"


def _max_threads() -> int:
    raw = os.environ.get("TOPOTIP_MAX_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _split_by_label(seq: SequenceDataset, do_standardize: bool):
    """Per-label sub-sequences, standardizing each full frame first."""
    labels = sorted({int(v) for f in seq.frames for v in f.labels})
    out = {}
    prepared = [standardize(f) if do_standardize else f for f in seq.frames]
    for lab in labels:
        frames = []
        for f in prepared:
            mask = f.labels == lab
            if not mask.any():
                raise SequenceSchemaError(f"label {lab} missing from a frame")
            frames.append(PointCloud(f.coords[mask], f.frame_param))
        out[lab] = SequenceDataset(tuple(frames))
    return out


def _labeled_outputs(out_path: str, label: int) -> str:
    stem, ext = os.path.splitext(out_path)
    return f"{stem}_label{label}{ext or '.csv'}"


def _run_tables(seq, run_one, out_path, cfg: RunConfig):
    """Run an indicator job once, or once per label for labeled input."""
    if seq.frames[0].labels is not None:
        jobs = _split_by_label(seq, cfg.standardize_labeled)
        n_workers = min(_max_threads(), len(jobs))
        results = {}
        if n_workers > 1:
            with ThreadPoolExecutor(max_workers=n_workers) as pool:
                futures = {lab: pool.submit(run_one, sub) for lab, sub in jobs.items()}
                results = {lab: fut.result() for lab, fut in futures.items()}
        else:
            results = {lab: run_one(sub) for lab, sub in jobs.items()}
        written = []
        for lab in sorted(results):
            table = results[lab]
            path = _labeled_outputs(out_path, lab)
            _atomic_write(path, table.save)
            written.append(path)
            _warn_nonconverged(table, suffix=f" (label {lab})")
        return written
    table = run_one(seq)
    _atomic_write(out_path, table.save)
    _warn_nonconverged(table)
    return [out_path]


def _warn_nonconverged(table: IndicatorTable, suffix: str = "") -> None:
    bad = [r.tau for r in table.rows if not r.converged]
    if bad:
        print(
            f"warning: {len(bad)} non-converged solve(s){suffix} at tau="
            + ",".join("%.4g" % t for t in bad),
            file=sys.stderr,
        )


# --- subcommands -------------------------------------------------------------


def cmd_synth(args) -> int:
    seed = args.seed
    if args.system in ("rvp", "dwell"):
        kind = "rvp" if args.system == "rvp" else "double_well"
        temperature = args.temperature
        if temperature is None:
            temperature = 0.001 if kind == "rvp" else 0.04
        h_grid = np.linspace(args.h_start, args.h_end, args.frames)
        seq = make_sequence(
            kind,
            h_grid,
            T=temperature,
            n=args.points,
            seed=seed,
            burn_in=args.burn_in,
            thin=args.thin,
            step_scale=args.step_scale,
            flip_prob=args.flip_prob,
        )
        resolved = {
            "system": args.system,
            "kind": kind,
            "h_start": args.h_start,
            "h_end": args.h_end,
            "frames": args.frames,
            "points": args.points,
            "temperature": temperature,
            "burn_in": args.burn_in,
            "thin": args.thin,
            "step_scale": args.step_scale,
            "flip_prob": args.flip_prob,
            "seed": seed,
            "out": args.out,
        }
    else:
        times = np.linspace(args.t_start, args.t_end, args.snapshots)
        params = DorsognaParams(
            n_particles=args.particles,
            self_prop=args.self_prop,
            friction=args.friction,
            attract_strength=args.attract_strength,
            attract_range=args.attract_range,
            repel_strength=args.repel_strength,
            repel_range=args.repel_range,
            dt=args.dt,
            snapshot_times=tuple(times),
        )
        seq = simulate_dorsogna(params, seed=seed)
        resolved = {**asdict(params), "seed": seed, "out": args.out}
    _atomic_write(args.out, lambda tmp: save_sequence(seq, tmp))
    _echo_config(args.out, f"synth {args.system}", resolved)
    print(f"wrote {seq.n_frames} frames to {args.out}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg = RunConfig.from_args(args)
    seq = load_sequence(args.input)

    def run_one(sub):
        return baseline_curves(
            sub,
            cfg.tpot(),
            cfg.mtn(),
            gamma=cfg.gamma,
            resample_to=cfg.resample_to,
            resample_seed=cfg.seed,
        )

    written = _run_tables(seq, run_one, args.out, cfg)
    _echo_config(args.out, "baseline", {**asdict(cfg), "input": args.input, "out": args.out})
    print("wrote " + ", ".join(written))
    return EXIT_OK


def _resolve_keyframes(args, n_frames: int) -> list:
    if args.keyframes:
        idx = [int(v) for v in args.keyframes.split(",")]
    else:
        idx = [int(round(v)) for v in np.linspace(0, n_frames - 1, args.num_keyframes)]
    if len(set(idx)) != len(idx):
        raise ValueError("keyframes must be distinct")
    return idx


def cmd_interp(args) -> int:
    cfg = RunConfig.from_args(args)
    seq = load_sequence(args.input)
    keyframes = _resolve_keyframes(args, seq.n_frames)

    def run_one(sub):
        return dynamic_curves(
            sub,
            keyframes,
            args.grid_points,
            cfg.tpot(),
            cfg.mtn(),
            gamma=cfg.gamma,
            reference=args.reference,
            matching_method=cfg.matching_method,
            resample_to=cfg.resample_to,
            resample_seed=cfg.seed,
        )

    written = _run_tables(seq, run_one, args.out, cfg)
    _echo_config(
        args.out,
        "interp",
        {
            **asdict(cfg),
            "input": args.input,
            "out": args.out,
            "keyframes": keyframes,
            "grid_points": args.grid_points,
            "reference": args.reference,
        },
    )
    print("wrote " + ", ".join(written))
    return EXIT_OK


def cmd_pointfield(args) -> int:
    cfg = RunConfig.from_args(args)
    seq = load_sequence(args.input)
    if not (0 <= args.frame_a < seq.n_frames and 0 <= args.frame_b < seq.n_frames):
        raise ValueError("frame indices out of range")
    cloud_a = seq.frames[args.frame_a]
    cloud_b = seq.frames[args.frame_b]
    if cfg.resample_to is not None:
        from .point_data import resample

        cloud_a = resample(cloud_a, cfg.resample_to, cfg.seed)
        cloud_b = resample(cloud_b, cfg.resample_to, cfg.seed + 1)
    net_a = build_mtn(cloud_a, cfg.hom_dim, cfg.max_cycles)
    net_b = build_mtn(cloud_b, cfg.hom_dim, cfg.max_cycles)
    coupling, _ = solve_tpot(net_a, net_b, cfg.tpot())
    method = "assignment" if cfg.exact_matching else "argmax"
    A = align_cycles(coupling.pi_e, method)
    fld = point_level_field(net_a.incidence, net_b.incidence, A)
    if fld.degenerate:
        print("warning: degenerate point field (single-vertex side)", file=sys.stderr)
    _atomic_write(args.out, lambda tmp: save_field(cloud_b.coords, fld, tmp))
    _echo_config(
        args.out,
        "pointfield",
        {**asdict(cfg), "input": args.input, "out": args.out,
         "frame_a": args.frame_a, "frame_b": args.frame_b},
    )
    print(f"wrote {args.out}")
    return EXIT_OK


def _selftest_checks(quick: bool):
    from .persistence import build_vr_filtration, compute_persistence
    from .point_data import pairwise_sq_dist, resample as _resample
    from .entropy import he_edge, he_sym, he_vertex

    rng = np.random.default_rng(20240901)

    def check_square():
        cloud = PointCloud(np.array([[0.0, 0], [1, 0], [1, 1], [0, 1]]))
        diag = compute_persistence(build_vr_filtration(pairwise_sq_dist(cloud)))
        h1 = diag.finite_in_dim(1)
        ok = (
            len(h1) == 1
            and abs(h1[0].birth - 1.0) < 1e-12
            and abs(h1[0].death - math.sqrt(2.0)) < 1e-12
            and h1[0].representative == frozenset({0, 1, 2, 3})
        )
        return ok, "unit square H1 pair (1, sqrt 2) with full representative"

    def check_entropy_bounds():
        n_trials = 50 if quick else 300
        for _ in range(n_trials):
            omega = (rng.random((rng.integers(2, 12), rng.integers(2, 8))) < 0.4).astype(float)
            v_act = (omega.sum(1) > 0).sum()
            e_act = (omega.sum(0) > 0).sum()
            hv, he = he_vertex(omega), he_edge(omega)
            if hv < -1e-12 or (v_act and hv > math.log(max(v_act, 1)) + 1e-12):
                return False, "vertex entropy bound violated"
            if he < -1e-12 or (e_act and he > math.log(max(e_act, 1)) + 1e-12):
                return False, "edge entropy bound violated"
        return True, f"entropy bounds on {n_trials} random incidences"

    def check_entropy_sensitivity():
        n_trials = 100 if quick else 500
        changed = 0
        for _ in range(n_trials):
            omega = (rng.random((6, 4)) < 0.5).astype(float)
            new_edge = np.zeros((6, 1))
            new_edge[rng.choice(6, size=int(rng.integers(1, 6)), replace=False)] = 1.0
            bigger = np.hstack([omega, new_edge])
            if abs(he_vertex(bigger) - he_vertex(omega)) > 1e-12 and abs(
                he_edge(bigger) - he_edge(omega)
            ) > 1e-12:
                changed += 1
        return changed >= 0.95 * n_trials, f"entropy sensitivity {changed}/{n_trials}"

    def check_isomorphism():
        omega = (rng.random((8, 5)) < 0.5).astype(float)
        pr = rng.permutation(8)
        pc = rng.permutation(5)
        permuted = omega[np.ix_(pr, pc)]
        ok = (
            abs(he_vertex(omega) - he_vertex(permuted)) < 1e-14
            and abs(he_edge(omega) - he_edge(permuted)) < 1e-14
            and abs(he_sym(omega) - he_sym(permuted)) < 1e-14
        )
        return ok, "entropy isomorphism invariance"

    def check_sinkhorn():
        C = rng.random((12, 9))
        a = np.full(12, 1.0 / 12)
        b = np.full(9, 1.0 / 9)
        P, _, _, violation, _ = sinkhorn_log(C, a, b, eps=0.05, max_iter=500)
        return violation < 1e-6, f"sinkhorn marginal violation {violation:.2e}"

    def check_mds_roundtrip():
        cloud = PointCloud(rng.normal(size=(25, 2)))
        k = pairwise_sq_dist(cloud)
        emb = classical_mds(k, 2)
        err = np.linalg.norm(pairwise_sq_dist(emb) - k)
        return err < 1e-8, f"MDS round-trip error {err:.2e}"

    def check_reconstruct_endpoints():
        a = PointCloud(rng.normal(size=(15, 2)))
        b = PointCloud(rng.normal(size=(15, 2)))
        pi_v = np.eye(15) / 15.0
        k0 = pairwise_sq_dist(reconstruct_frame(a, b, pi_v, 0.0))
        k1 = pairwise_sq_dist(reconstruct_frame(a, b, pi_v, 1.0))
        ok = (
            np.abs(k0 - pairwise_sq_dist(a)).max() < 1e-8
            and np.abs(k1 - pairwise_sq_dist(b)).max() < 1e-8
        )
        return ok, "reconstruction endpoint consistency"

    def check_resample_determinism():
        cloud = PointCloud(rng.normal(size=(40, 2)))
        r1 = _resample(cloud, 10, seed=7)
        r2 = _resample(cloud, 10, seed=7)
        return bool(np.array_equal(r1.coords, r2.coords)), "resample determinism"

    def check_mh_harness():
        spec = PotentialSpec("gaussian", T=1.0)
        cloud = sample_mh(spec, 2000, seed=3)
        cov = np.cov(cloud.coords.T)
        return np.abs(cov - np.eye(2)).max() < 0.15, "gaussian harness covariance"

    return [
        check_square,
        check_entropy_bounds,
        check_entropy_sensitivity,
        check_isomorphism,
        check_sinkhorn,
        check_mds_roundtrip,
        check_reconstruct_endpoints,
        check_resample_determinism,
        check_mh_harness,
    ]


def cmd_selftest(args) -> int:
    failures = 0
    for check in _selftest_checks(args.quick):
        ok, desc = check()
        print(("PASS" if ok else "FAIL") + f" {desc}")
        failures += 0 if ok else 1
    if failures:
        print(f"{failures} selftest check(s) failed", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topotip",
        description="Topological tipping indicators for time-evolving point clouds",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a benchmark sequence CSV")
    p_synth.add_argument("system", choices=["rvp", "dwell", "dorsogna"])
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--frames", type=int, default=51)
    p_synth.add_argument("--points", type=int, default=200)
    p_synth.add_argument("--temperature", type=float, default=None)
    p_synth.add_argument("--h-start", type=float, default=None)
    p_synth.add_argument("--h-end", type=float, default=None)
    p_synth.add_argument("--burn-in", type=int, default=5000)
    p_synth.add_argument("--thin", type=int, default=200)
    p_synth.add_argument("--step-scale", type=float, default=0.25)
    p_synth.add_argument("--flip-prob", type=float, default=0.2)
    p_synth.add_argument("--particles", type=int, default=300)
    p_synth.add_argument("--dt", type=float, default=1e-2)
    p_synth.add_argument("--t-start", type=float, default=1.0)
    p_synth.add_argument("--t-end", type=float, default=60.0)
    p_synth.add_argument("--snapshots", type=int, default=61)
    p_synth.add_argument("--self-prop", type=float, default=1.6)
    p_synth.add_argument("--friction", type=float, default=0.5)
    p_synth.add_argument("--attract-strength", type=float, default=0.5)
    p_synth.add_argument("--attract-range", type=float, default=2.0)
    p_synth.add_argument("--repel-strength", type=float, default=1.0)
    p_synth.add_argument("--repel-range", type=float, default=0.5)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.set_defaults(func=cmd_synth)

    p_base = sub.add_parser("baseline", help="frame-by-frame indicators vs the first frame")
    p_base.add_argument("--input", required=True)
    p_base.add_argument("--out", required=True)
    _solver_args(p_base)
    p_base.set_defaults(func=cmd_baseline)

    p_interp = sub.add_parser("interp", help="geodesic-reconstruction indicators from keyframes")
    p_interp.add_argument("--input", required=True)
    p_interp.add_argument("--out", required=True)
    p_interp.add_argument("--keyframes", default=None, help="comma-separated frame indices")
    p_interp.add_argument("--num-keyframes", type=int, default=4)
    p_interp.add_argument("--grid-points", type=int, default=13)
    p_interp.add_argument("--reference", choices=["global", "segment"], default="global")
    _solver_args(p_interp)
    p_interp.set_defaults(func=cmd_interp)

    p_field = sub.add_parser("pointfield", help="point-level entropy field between two frames")
    p_field.add_argument("--input", required=True)
    p_field.add_argument("--out", required=True)
    p_field.add_argument("--frame-a", type=int, required=True)
    p_field.add_argument("--frame-b", type=int, required=True)
    _solver_args(p_field)
    p_field.set_defaults(func=cmd_pointfield)

    p_self = sub.add_parser("selftest", help="run the built-in property checks")
    p_self.add_argument("--quick", action="store_true")
    p_self.set_defaults(func=cmd_selftest)

    return parser


def _fail(code: int, kind: str, exc: Exception) -> int:
    print(json.dumps({"error": kind, "exit_code": code, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "synth" and args.system in ("rvp", "dwell"):
        if args.h_start is None:
            args.h_start = -1.0 if args.system == "rvp" else 1.0
        if args.h_end is None:
            args.h_end = 1.0 if args.system == "rvp" else -1.0
    try:
        return args.func(args)
    except (SequenceParseError, SequenceSchemaError) as exc:
        return _fail(EXIT_INPUT, "input", exc)
    except FileNotFoundError as exc:
        return _fail(EXIT_INPUT, "input", exc)
    except (TpotNumericalError, IntegrationError, MatchingError) as exc:
        return _fail(EXIT_NUMERICAL, "numerical", exc)
    except ValueError as exc:
        return _fail(EXIT_CONFIG, "config", exc)


if __name__ == "__main__":
    sys.exit(main())
