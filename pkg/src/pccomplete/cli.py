"""``pccomplete`` command-line interface.

Exit codes: 0 success, 2 usage or input error, 3 malformed file,
4 internal invariant violation. Settings come from flags and an optional
``--config`` file only; flags win over the file.
"""
import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import metrics, neuralcore, pcgeom, pipeline, projection, selfcheck
from .errors import FormatError, InvalidArgumentError, CompletionError
from .profiles import CONFIG_KEYS, PROFILES, get_profile, parse_config
from .svfnet import Ablation, projection_params

EXIT_OK, EXIT_INPUT, EXIT_FORMAT, EXIT_INVARIANT = 0, 2, 3, 4


class InvariantViolation(CompletionError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors already; keep that but route through main
    def error(self, message):
        raise InvalidArgumentError(f"{self.prog}: {message}")


def _add_profile_args(p, keys):
    p.add_argument("--profile", default="pcn", choices=sorted(PROFILES))
    p.add_argument("--config", help="key = value file with profile overrides")
    flags = {
        "n_views": "--views",
        "resolution": "--resolution",
        "camera_distance": "--camera-distance",
        "n0": "--n0",
        "channels": "--channels",
        "seed": "--seed",
        "gamma": "--gamma",
        "densify_radius": "--densify-radius",
        "fov_degrees": "--fov",
    }
    for key in keys:
        p.add_argument(flags[key], dest=key, type=CONFIG_KEYS[key], default=None)


def _profile(args, keys):
    overrides = parse_config(args.config) if args.config else {}
    unused = set(overrides) - set(keys)
    if unused:
        raise InvalidArgumentError(f"config keys not used by this command: {sorted(unused)}")
    for key in keys:
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    return get_profile(args.profile, **overrides)


PROJECT_KEYS = ("n_views", "resolution", "camera_distance", "densify_radius", "fov_degrees")
NET_KEYS = tuple(CONFIG_KEYS)


def cmd_project(args):
    prof = _profile(args, PROJECT_KEYS)
    cloud = pcgeom.load_cloud(args.input)
    params = projection_params(prof)
    vps = projection.orthogonal_viewpoints(prof.camera_distance, prof.n_views)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, dm in enumerate(projection.project_views(cloud, vps, params)):
        projection.write_dmb(out / f"view_{i}.dmb", dm)
        projection.write_pgm(out / f"view_{i}.pgm", dm)
    print(f"wrote {len(vps)} depth maps to {out}")


def cmd_complete(args):
    prof = _profile(args, NET_KEYS)
    w = neuralcore.load_weights(args.weights)
    try:
        w.check_profile(prof)
    except (KeyError, CompletionError) as exc:
        raise InvalidArgumentError(f"weights do not match profile {prof.name!r}: {exc}") from None
    ablation = Ablation(
        no_projection=args.no_projection,
        no_analysis=args.no_analysis,
        no_alignment=args.no_alignment,
        no_incompleteness=args.no_incompleteness,
        fixed_alpha=args.fixed_alpha,
    )
    trace = pipeline.complete(pcgeom.load_cloud(args.input), w, prof, ablation)
    got = tuple(x.shape[0] for x in (trace.p_c, trace.p0, trace.p1, trace.p2))
    if got != prof.output_sizes() or not np.isfinite(trace.p2).all():
        raise InvariantViolation(f"stage sizes {got} differ from {prof.output_sizes()} or output is not finite")
    pcgeom.save_cloud(args.out, trace.p2)
    if args.trace:
        pipeline.write_trace(trace, args.trace)
    print(f"wrote {trace.p2.shape[0]} points to {args.out}")


def cmd_protocol(args):
    if not 0 <= args.viewpoint < 8:
        raise InvalidArgumentError(f"viewpoint index must be 0..7, got {args.viewpoint}")
    gt = pcgeom.load_cloud(args.input)
    vp = pcgeom.fixed_test_viewpoints()[args.viewpoint]
    partial, missing = pcgeom.viewpoint_crop(gt, vp, args.missing, args.n_keep)
    pcgeom.save_cloud(args.out, partial)
    if args.missing_out:
        pcgeom.save_cloud(args.missing_out, missing)
    print(f"wrote {partial.shape[0]}-point partial to {args.out}")


def _cloud_files(d):
    return sorted(p for p in Path(d).iterdir() if p.is_file() and p.suffix.lower() in (".pcb", ".xyz", ".txt"))


def cmd_eval(args):
    names = [m.strip() for m in args.metrics.split(",") if m.strip()]
    pred, gt = Path(args.pred), Path(args.gt)
    if pred.is_dir() != gt.is_dir():
        raise InvalidArgumentError("pred and gt must both be files or both be directories")
    if pred.is_dir():
        pairs = []
        for p in _cloud_files(pred):
            g = gt / p.name
            if not g.is_file():
                raise InvalidArgumentError(f"no ground truth for {p.name} in {gt}")
            pairs.append((p.name, p, g))
        if not pairs:
            raise InvalidArgumentError(f"no clouds found in {pred}")
    else:
        pairs = [(pred.name, pred, gt)]
    rows = []
    for name, p, g in pairs:
        rep = metrics.evaluate(pcgeom.load_cloud(p), pcgeom.load_cloud(g), names, args.tau, args.alpha)
        if len(pairs) > 1:
            print(f"[{name}]")
        for line in rep.lines():
            print(line)
        rows.append({"shape": name, **{k: f"{v:.9g}" for k, v in rep.values.items()}})
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)


def cmd_selfcheck(args):
    if not selfcheck.run():
        raise InvariantViolation("self-check failed")


def cmd_init_weights(args):
    prof = _profile(args, NET_KEYS)
    w = neuralcore.init_weights(prof, prof.seed)
    neuralcore.save_weights(w, args.out)
    n = sum(t.size for t in w.tensors.values())
    print(f"wrote {len(w)} tensors ({n} parameters) to {args.out}")


def cmd_fit_demo(args):
    rng = neuralcore.make_rng(args.seed)
    x0 = rng.random((args.points, 3)) - 0.5
    target = metrics.fibonacci_sphere(args.points)
    _, curve = metrics.toy_fit(x0, target, args.steps, args.lr)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        writer.writerows((i, f"{v:.9g}") for i, v in enumerate(curve))
    print(f"initial loss {curve[0]:.6g}, final loss {curve[-1]:.6g} ({curve[-1] / curve[0]:.1%} of initial)")


def build_parser():
    ap = _Parser(prog="pccomplete", description="Point cloud completion toolkit.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("project", help="render depth maps of a cloud")
    p.add_argument("input")
    p.add_argument("out_dir")
    _add_profile_args(p, PROJECT_KEYS)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("complete", help="complete a partial cloud")
    p.add_argument("input")
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", help="directory for intermediate clouds, gates and attention maps")
    p.add_argument("--no-projection", action="store_true")
    p.add_argument("--no-analysis", action="store_true")
    p.add_argument("--no-alignment", action="store_true")
    p.add_argument("--no-incompleteness", action="store_true")
    p.add_argument("--fixed-alpha", type=float, default=None)
    _add_profile_args(p, NET_KEYS)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("protocol", help="crop a complete cloud from one of the 8 test viewpoints")
    p.add_argument("input")
    p.add_argument("--viewpoint", type=int, required=True)
    p.add_argument("--missing", type=int, required=True, choices=(2048, 4096, 6144))
    p.add_argument("--n-keep", type=int, default=2048)
    p.add_argument("--out", required=True)
    p.add_argument("--missing-out")
    p.set_defaults(func=cmd_protocol)

    p = sub.add_parser("eval", help="compare predictions with ground truth")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--metrics", default=",".join(metrics.METRICS))
    p.add_argument("--tau", type=float, default=0.01)
    p.add_argument("--alpha", type=float, default=1000.0)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("selfcheck", help="run the built-in invariant and oracle checks")
    p.set_defaults(func=cmd_selfcheck)

    p = sub.add_parser("init-weights", help="write seeded random weights for a profile")
    p.add_argument("--out", required=True)
    _add_profile_args(p, NET_KEYS)
    p.set_defaults(func=cmd_init_weights)

    p = sub.add_parser("fit-demo", help="fit random points to a sphere by Chamfer descent")
    p.add_argument("--out", required=True)
    p.add_argument("--points", type=int, default=128)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fit_demo)
    return ap


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except FormatError as exc:
        print(f"pccomplete: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except InvariantViolation as exc:
        print(f"pccomplete: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (InvalidArgumentError, OSError) as exc:
        print(f"pccomplete: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # anything else is a bug in the pipeline
        print(f"pccomplete: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
