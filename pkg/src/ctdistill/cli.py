"""``ctdistill`` command line.

Exit codes: 0 success, 1 runtime error, 2 bad arguments or config,
3 pipeline finished but some cases failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .core import Geometry, InvariantError, Sinogram, Volume, hu_to_mu
from .degrade import DegradeSpec, degrade
from .enhance import EnhancerError, EnhancerSpec, enhance
from .fileio import FormatError, read_sinogram, read_volume, write_volume
from .harness import ConfigError, EvalReport, ablate, load_config, run_pipeline, score_histogram
from .phantom import PhantomSpec, make_phantom
from .projector import FbpFilter, GeometryError, fbp, radon_forward

log = logging.getLogger("ctdistill")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2, 3


def _geometry(args, v: Volume) -> Geometry:
    return Geometry.for_volume(v, n_angles=args.angles, n_bins=args.bins, bin_spacing=args.bin_spacing)


def _add_geometry(p):
    p.add_argument("--angles", type=int, default=720, help="projection angles over [0, pi)")
    p.add_argument("--bins", type=int, default=None, help="detector bins (default ceil(sqrt(2) n))")
    p.add_argument("--bin-spacing", type=float, default=None, help="detector pitch in mm (default pixel size)")


def _add_filter(p):
    p.add_argument("--filter", choices=["ramlak", "hann"], default="ramlak")
    p.add_argument("--cutoff", type=float, default=1.0, help="fraction of Nyquist kept by the ramp")


def cmd_phantom(args) -> int:
    vol, lab = make_phantom(PhantomSpec(kind=args.kind, n=args.n, seed=args.seed, n_vessels=args.vessels,
                                        airway_depth=args.airway_depth, fov_mm=args.fov))
    write_volume(vol, args.out)
    if args.labels:
        if lab is None:
            log.warning("%s phantom has no labels; skipping %s", args.kind, args.labels)
        else:
            write_volume(lab, args.labels)
    return EXIT_OK


def cmd_project(args) -> int:
    v = read_volume(args.inp)
    if not isinstance(v, Volume) or v.nslices != 1:
        raise InvariantError("project expects a single-slice HU volume")
    geom = _geometry(args, v)
    write_volume(radon_forward(hu_to_mu(v.data[0], geom.mu_water), geom, workers=args.workers), args.out)
    return EXIT_OK


def cmd_fbp(args) -> int:
    s: Sinogram = read_sinogram(args.inp)
    pixel = args.pixel_size or s.bin_spacing
    geom = Geometry(args.n, pixel, s.n_angles, s.n_bins, s.bin_spacing)
    write_volume(fbp(s, FbpFilter(args.filter, args.cutoff), geom, workers=args.workers), args.out)
    return EXIT_OK


def cmd_degrade(args) -> int:
    v = read_volume(args.inp)
    spec = DegradeSpec(kind=args.kind, k=args.k, alpha=args.alpha, mode=args.mode, i0=args.i0, scale=args.scale,
                       sigma_gauss=args.sigma, photon_scale=args.photon_scale, mixed_mode=args.mixed_mode)
    geom = None if spec.kind == "conventional" else _geometry(args, v)
    write_volume(degrade(v, spec, geom, FbpFilter(args.filter, args.cutoff), args.seed), args.out)
    return EXIT_OK


def cmd_enhance(args) -> int:
    v = read_volume(args.inp)
    spec = EnhancerSpec(kind=args.kind, patch_radius=args.patch_radius, search_radius=args.search_radius,
                        h=args.h, sigma=args.sigma, lam=args.lam, tv_iters=args.tv_iters,
                        sirt_iters=args.sirt_iters, relaxation=args.relaxation, command=args.command,
                        workdir=args.workdir, timeout=args.timeout)
    sinos = [read_sinogram(args.sinogram)] if args.sinogram else None
    geom = None
    if spec.kind == "sirt":
        if sinos:
            s = sinos[0]
            geom = Geometry(v.dims[0], v.spacing[0], s.n_angles, s.n_bins, s.bin_spacing)
        else:
            geom = _geometry(args, v)
    write_volume(enhance(v, spec, geom, sinos), args.out)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    config = load_config(args.config)
    report = run_pipeline(config)
    print(report.table(), end="")
    if report.failures:
        for r in report.failures:
            log.error("%s / %s / %s: %s", r.enhancer, r.degradation, r.case_id, r.error)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_ablate(args) -> int:
    config = load_config(args.config)
    result = ablate(config)
    for e in result.enhancers:
        print(result.table(e))
    for f in result.flags:
        log.warning("%s: %s on %s %+.2f dB over all degrades (%s)", f["row"], f["enhancer"], f["condition"],
                    f["psnr_without"] - f["psnr_all"], f["status"])
    if any(r.report.failures for r in result.rows):
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_hist(args) -> int:
    try:
        report = EvalReport.from_json(args.report)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"cannot read report {args.report}: {exc}") from exc
    out = args.out or Path(args.report).parent
    hist = score_histogram(report, args.metric, args.bins, out)
    for (e, d), counts in hist.counts.items():
        print(f"{e:>12} {d:>14}  mean bin {hist.mean_bin(e, d):6.2f}  {counts}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ctdistill", description="CT degradation/enhancement benchmark toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="write a synthetic phantom")
    p.add_argument("--kind", choices=["lung", "shepp_logan"], default="lung")
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vessels", type=int, default=12)
    p.add_argument("--airway-depth", type=int, default=4)
    p.add_argument("--fov", type=float, default=256.0, help="field of view in mm")
    p.add_argument("--out", required=True)
    p.add_argument("--labels")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("project", help="forward-project a single-slice volume to a sinogram")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    _add_geometry(p)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("fbp", help="filtered back-projection of a sinogram")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True, help="output image size")
    p.add_argument("--pixel-size", type=float, default=None, help="mm (default: the sinogram's bin spacing)")
    p.add_argument("--workers", type=int, default=1)
    _add_filter(p)
    p.set_defaults(func=cmd_fbp)

    p = sub.add_parser("degrade", help="apply one degradation to a volume")
    p.add_argument("--kind", choices=["sparse_view", "low_dose", "conventional", "mixed"], required=True)
    p.add_argument("--k", type=int, default=8, help="sparse-view angle stride")
    p.add_argument("--alpha", type=float, default=500.0, help="low-dose count scale")
    p.add_argument("--mode", choices=["paper", "transmission"], default="paper")
    p.add_argument("--i0", type=float, default=1e5, help="incident photons (transmission mode)")
    p.add_argument("--scale", type=int, default=2, help="conventional downsampling factor")
    p.add_argument("--sigma", type=float, default=20.0, help="conventional Gaussian sigma (HU)")
    p.add_argument("--photon-scale", type=float, default=4.0)
    p.add_argument("--mixed-mode", choices=["random", "sequential"], default="random")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    _add_geometry(p)
    _add_filter(p)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("enhance", help="run one enhancer on a volume")
    p.add_argument("--kind", choices=["identity", "nlm", "tv", "sirt", "external"], required=True)
    p.add_argument("--patch-radius", type=int, default=2)
    p.add_argument("--search-radius", type=int, default=5)
    p.add_argument("--h", type=float, default=40.0)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--lam", type=float, default=20.0)
    p.add_argument("--tv-iters", type=int, default=100)
    p.add_argument("--sirt-iters", type=int, default=50)
    p.add_argument("--relaxation", type=float, default=1.0)
    p.add_argument("--sinogram", help="measured sinogram for SIRT (otherwise the input is re-projected)")
    p.add_argument("--command", help="external enhancer command with {in} and {out} placeholders")
    p.add_argument("--workdir")
    p.add_argument("--timeout", type=float)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    _add_geometry(p)
    p.set_defaults(func=cmd_enhance)

    for name, fn, text in (("pipeline", cmd_pipeline, "evaluate enhancers on degraded cohorts"),
                           ("ablate", cmd_ablate, "leave-one-out degradation ablation")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True)
        p.set_defaults(func=fn)

    p = sub.add_parser("hist", help="histogram a per-case metric from a report")
    p.add_argument("--report", required=True)
    p.add_argument("--metric", default="ssim")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--out")
    p.set_defaults(func=cmd_hist)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InvariantError, GeometryError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (FormatError, EnhancerError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
