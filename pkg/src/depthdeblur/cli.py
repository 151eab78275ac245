"""Command line: synth, deblur, eval, render-seq.

Exit codes: 0 success, 1 solver failure, 2 missing input, 3 validation error.
DEPTHDEBLUR_THREADS sets the worker count (multi-start and batch runs).
"""
from __future__ import annotations

import argparse
import dataclasses
import glob as globlib
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .geometry import induced_flow
from .metrics import evaluate
from .pipeline import deblur, render_sequence
from .synth import procedural_instance, procedural_scene, sample_motion, synthesize
from .types import DeblurError, EnergyParams, Pose6, SolverOptions, params_from_mapping

log = logging.getLogger("depthdeblur")

EXIT_OK, EXIT_SOLVER, EXIT_MISSING, EXIT_INVALID = 0, 1, 2, 3
THREADS_ENV = "DEPTHDEBLUR_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"{THREADS_ENV} must be >= 1")
    return n


# synth

def _manifest(args, inst, source: dict) -> dict:
    K = inst.intrinsics
    return {
        "seed": inst.seed, "n_half": inst.n_half, "noise_sigma": inst.noise_sigma,
        "sigma_a": args.sigma_a, "sigma_t": args.sigma_t, "size": list(inst.depth.shape),
        "intrinsics": {"fx": K.fx, "fy": K.fy, "cx": K.cx, "cy": K.cy},
        "true_pose": [float(x) for x in inst.true_pose.as_vector()],
        "source": source,
    }


def _replay_args(args):
    m = io.read_json(args.manifest)
    src = m.get("source", {})
    args.seed, args.sigma_a, args.sigma_t = m["seed"], m["sigma_a"], m["sigma_t"]
    args.noise, args.n_half = m["noise_sigma"], m["n_half"]
    if src.get("kind") == "procedural":
        args.procedural, args.size = True, src["size"]
    else:
        args.procedural = False
        args.clean, args.depth, args.intrinsics = src["clean"], src["depth"], src["intrinsics"]
    return args


def cmd_synth(args) -> int:
    if args.manifest:
        args = _replay_args(args)
    if not (args.sigma_a > 0 and args.sigma_t > 0):
        raise UsageError("--sigma-a and --sigma-t must be positive")
    if args.procedural:
        inst = procedural_instance(args.seed, args.size, args.sigma_a, args.sigma_t, args.n_half, args.noise)
        source = {"kind": "procedural", "size": args.size}
    else:
        if not (args.clean and args.depth):
            raise UsageError("give --procedural or both --clean and --depth")
        clean = io.read_png16(args.clean)
        depth = io.read_depth(args.depth)
        K = io.read_intrinsics(args.intrinsics) if args.intrinsics else None
        if K is None:
            from .types import Intrinsics
            K = Intrinsics.default_for(*depth.shape)
        rng_motion, rng_noise = np.random.SeedSequence(args.seed).spawn(2)
        p = sample_motion(args.sigma_a, args.sigma_t, np.random.default_rng(rng_motion))
        inst = synthesize(clean, depth, K, p, args.n_half, args.noise, int(rng_noise.generate_state(1)[0]))
        inst = dataclasses.replace(inst, seed=args.seed)
        source = {"kind": "files", "clean": str(args.clean), "depth": str(args.depth),
                  "intrinsics": str(args.intrinsics) if args.intrinsics else None}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_png16(out / io.BLURRY, inst.blurry)
    io.write_png16(out / io.CLEAN, inst.clean)
    io.write_depth(out / io.DEPTH, inst.depth)
    io.write_intrinsics(out / io.INTRINSICS, inst.intrinsics)
    io.write_pose(out / io.TRUE_POSE, inst.true_pose)
    io.write_flow(out / io.TRUE_FLOW, inst.true_flow)
    io.write_json(out / io.MANIFEST, _manifest(args, inst, source))
    mag = np.linalg.norm(inst.true_flow.data[inst.true_flow.valid], axis=-1)
    print("pose " + " ".join(f"{x:.6f}" for x in inst.true_pose.as_vector()))
    print(f"blur mean={mag.mean():.3f}px max={mag.max():.3f}px")
    return EXIT_OK


# deblur

_ENERGY_FIELDS = [f.name for f in dataclasses.fields(EnergyParams)]
_SOLVER_FIELDS = [f.name for f in dataclasses.fields(SolverOptions)]


def _params(args) -> tuple[EnergyParams, SolverOptions]:
    """Defaults, overlaid by the config file, overlaid by explicit flags."""
    energy, solver = EnergyParams(), SolverOptions(workers=_threads())
    if args.config:
        energy, solver = params_from_mapping(io.read_json(args.config), energy, solver)
    flags = {k: getattr(args, k) for k in _ENERGY_FIELDS + _SOLVER_FIELDS if getattr(args, k, None) is not None}
    if flags:
        energy, solver = params_from_mapping(flags, energy, solver)
    return energy, solver


def _load_inputs(args, bundle: Path | None):
    if bundle is not None:
        image, depth, intr = bundle / io.BLURRY, bundle / io.DEPTH, bundle / io.INTRINSICS
    else:
        if not (args.image and args.depth and args.intrinsics):
            raise UsageError("give a bundle directory or --image, --depth and --intrinsics")
        image, depth, intr = Path(args.image), Path(args.depth), Path(args.intrinsics)
    B = io.read_png16(image)
    D = io.read_depth(depth)
    K = io.read_intrinsics(intr)
    return B, D, K


def _deblur_one(args, bundle: Path | None, out: Path, energy, solver) -> int:
    B, D, K = _load_inputs(args, bundle)
    fixed = io.read_pose(args.pose) if args.pose else None
    out.mkdir(parents=True, exist_ok=True)
    try:
        res = deblur(B, D, K, energy, solver, p_init=fixed, fix_pose=fixed is not None)
    except DeblurError as exc:
        io.write_json(out / io.STATUS, {"converged": False, "partial": True, "message": str(exc)})
        log.error("%s: %s", bundle or args.image, exc)
        return EXIT_SOLVER
    io.write_png16(out / io.LATENT, res.latent)
    io.write_pose(out / io.POSE, res.pose)
    io.write_flow(out / io.FLOW, res.flow)
    io.write_energy_csv(out / io.ENERGY, [(r.level, i, e) for r in res.levels for i, e in enumerate(r.energies)])
    io.write_json(out / io.STATUS, {"converged": res.converged, "partial": not res.converged,
                                    "message": res.message, "wall_time": round(res.wall_time, 3)})
    print(f"{out}: pose " + " ".join(f"{x:.6f}" for x in res.pose.as_vector()))
    return EXIT_OK if res.converged else EXIT_SOLVER


def cmd_deblur(args) -> int:
    energy, solver = _params(args)
    out = Path(args.out)
    if args.glob:
        bundles = sorted(Path(p) for p in globlib.glob(args.glob) if Path(p).is_dir())
        if not bundles:
            raise io.MissingInput(f"no bundle directories match {args.glob}")
        inner = dataclasses.replace(solver, workers=1)
        with ThreadPoolExecutor(solver.workers) as pool:
            codes = list(pool.map(lambda b: _guarded(_deblur_one, args, b, out / b.name, energy, inner), bundles))
        return max(codes)
    return _deblur_one(args, Path(args.bundle) if args.bundle else None, out, energy, solver)


# eval

def cmd_eval(args) -> int:
    res, gt = Path(args.result), Path(args.bundle)
    if not (gt / io.CLEAN).is_file():
        raise io.MissingInput(f"ground truth not found: {gt / io.CLEAN}")
    latent = io.read_png16(Path(args.image) if args.image else res / io.LATENT)
    clean = io.read_png16(gt / io.CLEAN)
    est_flow = io.read_flow(res / io.FLOW) if (res / io.FLOW).is_file() and not args.image else None
    true_flow = io.read_flow(gt / io.TRUE_FLOW) if (gt / io.TRUE_FLOW).is_file() else None
    if est_flow is not None and true_flow is not None and args.align_sign and (res / io.POSE).is_file():
        # blur is symmetric in the motion direction; score the orientation closer to the truth
        from .metrics import endpoint_error
        D, K = io.read_depth(gt / io.DEPTH), io.read_intrinsics(gt / io.INTRINSICS)
        flipped = induced_flow(-io.read_pose(res / io.POSE), D, K)
        e0, v0 = endpoint_error(est_flow, true_flow)
        e1, v1 = endpoint_error(flipped, true_flow)
        if e1[v1].mean() < e0[v0].mean():
            est_flow = flipped
    report = evaluate(latent, clean, est_flow, true_flow)
    text = report.to_text()
    sys.stdout.write(text)
    if args.report:
        Path(args.report).write_text(report.to_json() + "\n" if args.report.endswith(".json") else text)
    return EXIT_OK


# render-seq

def cmd_render(args) -> int:
    if args.frames < 2:
        raise UsageError("--frames must be at least 2")
    res = Path(args.result)
    L = io.read_png16(res / io.LATENT)
    p = io.read_pose(res / io.POSE)
    if args.bundle:
        D, K = io.read_depth(Path(args.bundle) / io.DEPTH), io.read_intrinsics(Path(args.bundle) / io.INTRINSICS)
    elif args.depth and args.intrinsics:
        D, K = io.read_depth(args.depth), io.read_intrinsics(args.intrinsics)
    else:
        raise UsageError("give --bundle or --depth and --intrinsics")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    width = len(str(args.frames - 1))
    for i, frame in enumerate(render_sequence((L, p), D, K, args.frames)):
        io.write_png16(out / f"frame_{i:0{width}d}.png", frame)
    print(f"wrote {args.frames} frames to {out}")
    return EXIT_OK


def _add_param_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("parameters (override the config file)")
    for f in dataclasses.fields(EnergyParams) + dataclasses.fields(SolverOptions):
        if f.name == "workers":
            continue
        kind = int if f.type in ("int", int) else float
        flag = "--" + f.name.replace("_", "-")
        extra = ["--levels"] if f.name == "pyramid_levels" else []
        g.add_argument(flag, *extra, dest=f.name, type=kind, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="depthdeblur", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a ground-truth blurry instance bundle")
    s.add_argument("--procedural", action="store_true", help="generate the textured slanted-plane scene")
    s.add_argument("--clean", help="sharp input image (PNG)")
    s.add_argument("--depth", help="depth map (PFM) for --clean")
    s.add_argument("--intrinsics", help="intrinsics JSON for --clean (default: 74 deg FOV)")
    s.add_argument("--manifest", help="regenerate the bundle described by this manifest")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sigma-a", type=float, default=0.05, help="rotation std (rad)")
    s.add_argument("--sigma-t", type=float, default=0.05, help="translation std (m)")
    s.add_argument("--noise", type=float, default=0.01)
    s.add_argument("--n-half", type=int, default=10)
    s.add_argument("--size", type=int, default=96)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    d = sub.add_parser("deblur", help="estimate camera motion and the sharp image")
    d.add_argument("bundle", nargs="?", help="instance bundle directory")
    d.add_argument("--image")
    d.add_argument("--depth")
    d.add_argument("--intrinsics")
    d.add_argument("--glob", help="process every bundle directory matching this pattern")
    d.add_argument("--config", help="JSON file of parameter overrides")
    d.add_argument("--pose", help="use this pose file and skip motion estimation")
    d.add_argument("--out", required=True)
    _add_param_flags(d)
    d.set_defaults(func=cmd_deblur)

    e = sub.add_parser("eval", help="score a deblur result against ground truth")
    e.add_argument("result", help="deblur output directory")
    e.add_argument("--bundle", required=True, help="instance bundle with ground truth")
    e.add_argument("--image", help="score this image instead of the result's latent")
    e.add_argument("--no-align-sign", dest="align_sign", action="store_false",
                   help="score the estimated motion as is, not its closer orientation")
    e.add_argument("--report", help="also write the report here (.json for structured output)")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("render-seq", help="render sharp frames along the recovered motion")
    r.add_argument("result")
    r.add_argument("--bundle")
    r.add_argument("--depth")
    r.add_argument("--intrinsics")
    r.add_argument("--frames", type=int, required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_render)
    return ap


def _guarded(fn, *args) -> int:
    from .types import DeblurError as _E
    try:
        return fn(*args)
    except io.MissingInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except _E as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER if type(exc).__name__ == "CGBreakdown" else EXIT_INVALID


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return _guarded(args.func, args)


if __name__ == "__main__":
    sys.exit(main())
