"""Command-line entry point: ``sdirecon <command> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import metrics
from .cube import (
    CubeError,
    FilterStack,
    HsiCube,
    Measurement,
    PsfStack,
    export_band_image,
    load_cube,
    save_cube,
)
from .denoisers import Denoiser
from .forward import ApeSystem, CassiSystem, Encoding, NoiseSpec, SdiSystem, sdi_forward
from .oracle import EQUIVALENCE_RTOL, OperatorTooLargeError, equivalence_trial, hessian_report
from .solver import (
    ParameterError,
    SolverParams,
    initialize,
    load_config,
    params_from_config,
    run,
    tv_schedule,
)
from .synth import default_kernel_size, make_scene, make_system

SYSTEM_FILE = "system.json"
DEFAULT_STAGES = 5
ABLATE_AXES = ("conversion", "fs-branch", "stages", "fusion")
ABLATE_STAGES = (2, 3, 4, 5, 6)
ABLATE_FUSION = (1.0, 0.75, 0.5, 0.25)


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


# -- system files -------------------------------------------------------------


def save_system(system: SdiSystem, out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    f = system.filters
    save_cube(HsiCube(system.psfs.data), out / "psf.hsic")
    save_cube(HsiCube(f.data.reshape(f.channels * f.bands, f.height, f.width)), out / "filters.hsic")
    meta = {
        "channels": f.channels,
        "bands": f.bands,
        "encoding": system.encoding.value,
        "psf": "psf.hsic",
        "filters": "filters.hsic",
    }
    path = out / SYSTEM_FILE
    path.write_text(json.dumps(meta, indent=2) + "\n")
    return path


def load_system(path) -> SdiSystem:
    path = Path(path)
    if path.is_dir():
        path = path / SYSTEM_FILE
    try:
        meta = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc.msg})") from None
    for key in ("channels", "bands", "psf", "filters"):
        if key not in meta:
            raise CliError(f"{path}: {key}: missing field")
    ch, bands = meta["channels"], meta["bands"]
    psf = load_cube(path.parent / meta["psf"])
    flt = load_cube(path.parent / meta["filters"])
    if psf.bands != bands:
        raise CliError(f"{path}: bands: PSF file has {psf.bands} bands, expected {bands}")
    if flt.bands != ch * bands:
        raise CliError(f"{path}: channels: filter file has {flt.bands} planes, expected {ch * bands}")
    filters = FilterStack(flt.data.reshape(ch, bands, flt.height, flt.width))
    return SdiSystem(PsfStack(psf.data), filters, meta.get("encoding", "amplitude"))


def _load_measurement(path) -> Measurement:
    return Measurement(load_cube(path).data)


def _solver_setup(args, measurement, system, stages=None):
    """Config file fields override estimator defaults; with no config the
    TV denoiser and its schedule are used."""
    if args.config:
        cfg = load_config(args.config)
        if stages is not None:
            cfg = {k: v for k, v in cfg.items() if k not in ("gamma", "phi", "chi")} | {"stages": stages}
        return params_from_config(cfg, measurement, system)
    return tv_schedule(measurement, system, stages or DEFAULT_STAGES), Denoiser("tv")


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands -----------------------------------------------------------------


def cmd_gen(args):
    out = _out(args)
    kernel = args.kernel or default_kernel_size(args.height, args.width)
    scene = make_scene(args.height, args.width, args.bands, seed=args.seed)
    system = make_system(args.kind, args.height, args.width, args.bands, args.channels,
                         seed=args.seed, kernel_size=kernel)
    save_cube(scene, out / "scene.hsic")
    save_system(system, out)
    export_band_image(scene, 0, out / "scene_band0.pgm")
    print(f"wrote scene {scene.shape} and {args.kind} system to {out}")


def cmd_simulate(args):
    out = _out(args)
    scene = load_cube(args.scene)
    system = load_system(args.system)
    noise = NoiseSpec.gaussian(args.sigma, args.seed)
    meas = sdi_forward(scene, system, noise)
    save_cube(HsiCube(meas.data), out / "measurement.hsic")
    print(f"wrote measurement {meas.data.shape} (sigma={args.sigma}) to {out}")


def cmd_reconstruct(args):
    out = _out(args)
    system = load_system(args.system)
    meas = _load_measurement(args.measurement)
    params, denoiser = _solver_setup(args, meas, system)
    recon, state = run(meas, system, params, denoiser)
    save_cube(recon, out / "reconstruction.hsic")
    export_band_image(recon, 0, out / "reconstruction_band0.pgm")
    log = {
        "params": params.to_config(),
        "denoiser": denoiser.to_config(),
        "energy": state.energy,
        "augmented": state.augmented,
    }
    if args.scene:
        scene = load_cube(args.scene)
        log["metrics"] = {
            "initial": metrics.metric_row("scene", "initialize", scene, initialize(meas, system)),
            "final": metrics.metric_row("scene", "reconstruct", scene, recon),
        }
    (out / "state.json").write_text(json.dumps(log, indent=2) + "\n")
    print(f"reconstructed {recon.shape} in {params.stages} stages; final energy {state.energy[-1]:.6g}")


def cmd_verify(args):
    passed = 0
    for t in range(args.trials):
        res = equivalence_trial(args.seed + t)
        ok = res["filtering"] <= EQUIVALENCE_RTOL and res["convolution"] <= EQUIVALENCE_RTOL
        passed += ok
        if not ok:
            print(f"trial {t} seed {res['seed']} dims {res['dims']}: filtering {res['filtering']:.3e}, "
                  f"convolution {res['convolution']:.3e}")
    print(f"{passed}/{args.trials} pass")
    return 0 if passed == args.trials else 1


def cmd_hessian_report(args):
    out = _out(args)
    rng = np.random.default_rng(args.seed)
    if args.model == "sdi":
        if args.system:
            system = load_system(args.system)
        else:
            h, w, c = args.height, args.width, args.bands
            k = args.kernel or default_kernel_size(h, w, cap=5)
            system = make_system(args.kind, h, w, c, channels=args.channels, seed=args.seed, kernel_size=k)
        report = hessian_report(system)
    elif args.model == "cassi":
        mask = (rng.random((args.height, args.width)) < 0.5).astype(float)
        report = hessian_report(CassiSystem(mask, args.dispersion), bands=args.bands)
    else:
        report = hessian_report(ApeSystem(rng.random((args.bands, args.height, args.width))))
    (out / "hessian.json").write_text(report.to_json() + "\n")
    print(report.to_json())


def _scene_and_system(args):
    return load_cube(args.scene), load_system(args.system)


def cmd_noise_sweep(args):
    out = _out(args)
    scene, system = _scene_and_system(args)
    rows = []
    for sigma in args.sigmas:
        meas = sdi_forward(scene, system, NoiseSpec.gaussian(sigma, args.seed))
        params, denoiser = _solver_setup(args, meas, system)
        recon, _ = run(meas, system, params, denoiser)
        row = metrics.metric_row(Path(args.scene).stem, "hqs", scene, recon)
        rows.append({"sigma": sigma, **row})
    text = metrics.rows_to_csv(rows, ("sigma",) + metrics.CSV_FIELDS)
    (out / "noise_sweep.csv").write_text(text)
    print(text, end="")


def _ablation_runs(args, meas, system):
    axis = args.axis
    if axis == "stages":
        for k in ABLATE_STAGES:
            params, denoiser = _solver_setup(args, meas, system, stages=k)
            yield f"{k}stg", params, denoiser
        return
    params, denoiser = _solver_setup(args, meas, system)
    cfg = params.to_config()
    vec = dict(gamma=params.gamma, phi=params.phi, chi=params.chi, eps=params.eps)
    if axis == "conversion":
        for conv in ("real", "amplitude", "imag"):
            yield conv, SolverParams(**vec, fusion_weight=params.fusion_weight, conversion=conv), denoiser
    elif axis == "fusion":
        for wgt in ABLATE_FUSION:
            yield f"w={wgt}", SolverParams(**vec, fusion_weight=wgt, conversion=cfg["conversion"]), denoiser
    else:
        for beta in (0.0, 1.0):
            sfat = Denoiser("sfat", {"beta": beta, "seed": args.seed})
            yield ("with-fs" if beta else "without-fs"), params, sfat


def cmd_ablate(args):
    out = _out(args)
    scene, system = _scene_and_system(args)
    meas = sdi_forward(scene, system, NoiseSpec.gaussian(args.sigma, args.seed))
    rows = []
    for label, params, denoiser in _ablation_runs(args, meas, system):
        recon, _ = run(meas, system, params, denoiser)
        rows.append(metrics.metric_row(Path(args.scene).stem, label, scene, recon))
    text = metrics.rows_to_csv(rows)
    (out / f"ablate_{args.axis}.csv").write_text(text)
    print(text, end="")


# -- parser -------------------------------------------------------------------


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _sigmas(text):
    vals = [float(s) for s in text.split(",") if s.strip()]
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("expected comma-separated sigmas >= 0")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="solver config JSON")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=".", help="output directory")

    p = _Parser(prog="sdirecon", description="Spectral deconvolution imaging toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="write a synthetic scene and SDI system")
    g.add_argument("--kind", choices=[e.value for e in Encoding], default="amplitude")
    g.add_argument("--height", type=_positive_int, default=32)
    g.add_argument("--width", type=_positive_int, default=32)
    g.add_argument("--bands", type=_positive_int, default=4)
    g.add_argument("--channels", type=int, choices=(1, 3), default=3)
    g.add_argument("--kernel", type=_positive_int, help="PSF size (default: min(15, scene), odd)")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("simulate", parents=[common], help="apply the forward model plus noise")
    s.add_argument("--scene", required=True)
    s.add_argument("--system", required=True, help="system.json or its directory")
    s.add_argument("--sigma", type=float, default=0.0)
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("reconstruct", parents=[common], help="run the HQS solver")
    r.add_argument("--measurement", required=True)
    r.add_argument("--system", required=True)
    r.add_argument("--scene", help="ground truth for metrics in state.json")
    r.set_defaults(func=cmd_reconstruct)

    v = sub.add_parser("verify", parents=[common], help="closed forms against dense solves")
    v.add_argument("--trials", type=_positive_int, default=100)
    v.set_defaults(func=cmd_verify)

    h = sub.add_parser("hessian-report", parents=[common], help="dense Phi^T Phi structure report")
    h.add_argument("--model", choices=("sdi", "cassi", "ape"), default="sdi")
    h.add_argument("--system", help="system.json (sdi only); otherwise a random tiny system")
    h.add_argument("--kind", choices=[e.value for e in Encoding], default="scatter")
    h.add_argument("--height", type=_positive_int, default=8)
    h.add_argument("--width", type=_positive_int, default=8)
    h.add_argument("--bands", type=_positive_int, default=2)
    h.add_argument("--channels", type=int, choices=(1, 3), default=1)
    h.add_argument("--kernel", type=_positive_int)
    h.add_argument("--dispersion", type=int, default=1)
    h.set_defaults(func=cmd_hessian_report)

    n = sub.add_parser("noise-sweep", parents=[common], help="PSNR/SSIM/SAM against noise level")
    n.add_argument("--scene", required=True)
    n.add_argument("--system", required=True)
    n.add_argument("--sigmas", type=_sigmas, default=[0.0, 0.01])
    n.set_defaults(func=cmd_noise_sweep)

    a = sub.add_parser("ablate", parents=[common], help="sweep one solver design axis")
    a.add_argument("--scene", required=True)
    a.add_argument("--system", required=True)
    a.add_argument("--axis", choices=ABLATE_AXES, required=True)
    a.add_argument("--sigma", type=float, default=0.0)
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        code = args.func(args)
    except (CliError, CubeError, ParameterError, OperatorTooLargeError, ValueError,
            IndexError, KeyError, OSError) as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"sdirecon: error: {msg}", file=sys.stderr)
        return 2
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
