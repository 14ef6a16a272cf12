"""Command-line surface: synth, denoise, rank, metrics, export-image, bench.

Every command writes a run manifest (a JSON file next to its primary
output) holding the fully resolved argument vector, so any run can be
reproduced bit-exactly with ``padenoise replay <manifest>``. All
randomness flows through explicit ``--seed`` flags.

Exit codes: 0 success, 2 usage error, 3 validation error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import average_frames, dwt_denoise_stack, sliding_average
from .errors import UsageError, ValidationError
from .framestack import FrameStack, load_framestack, save_framestack, to_casorati
from .metrics import (
    MetricsReport,
    RoiSet,
    epi,
    fwhm,
    psnr,
    roi_cnr,
    roi_snr,
    ssim,
    write_reports_csv,
)
from .phantom import (
    DEFAULT_DT_S,
    DEFAULT_DX_MM,
    DEFAULT_DZ_MM,
    DEFAULT_FLUENCE_Z0_MM,
    DEFAULT_N_X,
    DEFAULT_N_Z,
    Vessel,
    add_gaussian_noise,
    make_framestack,
    make_vessel_pattern,
)
from .rankselect import (
    DEFAULT_TAU,
    RankEstimate,
    choose_rank,
    estimate_rank_spatial,
    estimate_rank_temporal,
    spatial_similarity_matrix,
)
from .stream import StreamConfig, bench, stream_denoise_stack
from .svdcore import (
    DEFAULT_OVERSAMPLE,
    DEFAULT_POWER_ITERS,
    DEFAULT_SEED,
    full_svd,
    rsvd_denoise,
)

AUTO_RANKS = ("auto-temporal", "auto-spatial", "auto-min")


def manifest_path(primary_out: str | Path) -> Path:
    out = Path(primary_out)
    return out.with_name(out.stem + ".manifest.json")


def write_manifest(command: str, argv: list[str], params: dict, outputs: list, primary_out) -> Path:
    manifest = {
        "tool": "padenoise",
        "version": __version__,
        "command": command,
        "argv": argv,
        "params": params,
        "outputs": [str(p) for p in outputs],
    }
    path = manifest_path(primary_out)
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def parse_schedule(text: str) -> list[tuple[int, float]]:
    """Parse 'count:shift_mm,count:shift_mm,...' into schedule groups."""
    groups = []
    for token in text.split(","):
        token = token.strip()
        parts = token.split(":")
        if len(parts) != 2:
            raise UsageError(f"bad schedule token {token!r}, expected 'count:shift_mm'")
        try:
            count = int(parts[0])
            shift = float(parts[1])
        except ValueError:
            raise UsageError(f"bad schedule token {token!r}, expected 'count:shift_mm'") from None
        groups.append((count, shift))
    return groups


def _load_vessels(path: str) -> tuple[Vessel, ...]:
    spec = json.loads(Path(path).read_text())
    if not isinstance(spec, list):
        raise ValidationError(f"{path}: vessel file must hold a JSON list")
    vessels = []
    for entry in spec:
        if not (isinstance(entry, list) and len(entry) == 4):
            raise ValidationError(f"{path}: each vessel must be [cx_mm, cz_mm, radius_mm, intensity]")
        vessels.append(Vessel(*(float(v) for v in entry)))
    return tuple(vessels)


def cmd_synth(args) -> int:
    schedule = parse_schedule(args.schedule)
    n_t = sum(count for count, _ in schedule)
    if args.nt is not None and args.nt != n_t:
        raise UsageError(f"--nt {args.nt} disagrees with schedule total {n_t}")
    vessels = _load_vessels(args.vessels) if args.vessels else None
    z0 = args.fluence_z0 if args.fluence_z0 > 0 else None
    pattern = make_vessel_pattern(
        vessels, n_x=args.nx, n_z=args.nz, dx_mm=args.dx, dz_mm=args.dz, fluence_z0_mm=z0
    )
    fs = make_framestack(pattern, schedule, dt_s=args.dt)
    if args.snr_db is not None:
        fs = add_gaussian_noise(fs, args.snr_db, args.seed)
    out = Path(args.out)
    save_framestack(fs, out)
    argv = ["synth", "--nx", str(args.nx), "--nz", str(args.nz), "--dx", repr(args.dx),
            "--dz", repr(args.dz), "--dt", repr(args.dt), "--schedule", args.schedule,
            "--seed", str(args.seed), "--fluence-z0", repr(args.fluence_z0)]
    if args.snr_db is not None:
        argv += ["--snr-db", repr(args.snr_db)]
    if args.vessels:
        argv += ["--vessels", args.vessels]
    argv += ["--out", str(out)]
    params = {
        "n_x": args.nx, "n_z": args.nz, "n_t": n_t, "dx_mm": args.dx, "dz_mm": args.dz,
        "dt_s": args.dt, "schedule": schedule, "snr_db": args.snr_db, "seed": args.seed,
        "fluence_z0_mm": args.fluence_z0, "vessels": args.vessels,
    }
    data_file = out.with_suffix("").name + ".f32"
    write_manifest("synth", argv, params, [out, out.parent / data_file], out)
    print(f"wrote {out} ({args.nx}x{args.nz}x{n_t})")
    return 0


def _estimate_ranks(fs: FrameStack, n_eval: int | None, tau: float):
    factors = full_svd(to_casorati(fs))
    n_eval = min(n_eval or 75, factors.rank)
    temporal = estimate_rank_temporal(factors.v, n_eval=n_eval)
    spatial = estimate_rank_spatial(spatial_similarity_matrix(factors.u, n_eval=n_eval), tau=tau)
    return temporal, spatial


def _write_bandwidth_csv(est: RankEstimate, path: Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("order", "bandwidth99"))
        for i, bw in enumerate(est.diagnostics, start=1):
            writer.writerow((i, repr(float(bw))))


def _write_similarity_csv(est: RankEstimate, path: Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for row in est.diagnostics:
            writer.writerow([repr(float(v)) for v in row])


def cmd_denoise(args) -> int:
    fs = load_framestack(args.input)
    out = Path(args.out)
    outputs = [out, out.parent / (out.with_suffix("").name + ".f32")]
    params: dict = {"method": args.method, "input": args.input, "out": str(out)}
    argv = ["denoise", "--input", args.input, "--method", args.method]

    if args.method == "avg":
        if args.rank is not None:
            raise UsageError("--rank does not apply to --method avg")
        if args.stride is not None or args.levels is not None:
            raise UsageError("--stride/--levels do not apply to --method avg")
        if args.window is not None:
            result = sliding_average(fs, args.window)
            params["window"] = args.window
            argv += ["--window", str(args.window)]
        else:
            result = average_frames(fs)
    elif args.method == "dwt":
        if args.rank is not None or args.window is not None or args.stride is not None:
            raise UsageError("--rank/--window/--stride do not apply to --method dwt")
        levels = args.levels if args.levels is not None else 4
        result = dwt_denoise_stack(fs, levels=levels)
        params["levels"] = levels
        argv += ["--levels", str(levels)]
    elif args.method == "stsvd":
        if args.levels is not None:
            raise UsageError("--levels does not apply to --method stsvd")
        rank = args.rank if args.rank is not None else "1"
        params.update(
            {"rank": rank, "oversample": args.oversample, "power_iters": args.power_iters,
             "seed": args.seed, "tau": args.tau, "n_eval": args.n_eval}
        )
        argv += ["--rank", rank, "--oversample", str(args.oversample),
                 "--power-iters", str(args.power_iters), "--seed", str(args.seed),
                 "--tau", repr(args.tau)]
        if args.n_eval is not None:
            argv += ["--n-eval", str(args.n_eval)]
        if args.window is not None:
            if rank in AUTO_RANKS:
                policy = rank
                k = 1
            else:
                policy = "fixed"
                k = _parse_rank_int(rank)
            cfg = StreamConfig(
                window=args.window,
                stride=args.stride,
                rank_policy=policy,
                k=k,
                p=args.oversample,
                q=args.power_iters,
                seed=args.seed,
                n_eval=args.n_eval,
                tau=args.tau,
            )
            rank_log: list[int] = []
            result = stream_denoise_stack(fs, cfg, rank_log=rank_log)
            params.update({"window": cfg.window, "stride": cfg.stride, "window_ranks": rank_log})
            argv += ["--window", str(cfg.window), "--stride", str(cfg.stride)]
        elif args.stride is not None:
            raise UsageError("--stride requires --window")
        elif rank in AUTO_RANKS:
            temporal, spatial = _estimate_ranks(fs, args.n_eval, args.tau)
            k = choose_rank(temporal, spatial, rank.removeprefix("auto-"))
            result = rsvd_denoise(fs, k, p=args.oversample, q=args.power_iters, seed=args.seed)
            stem = out.with_suffix("").name
            bw_path = out.parent / (stem + "_bandwidth.csv")
            sim_path = out.parent / (stem + "_similarity.csv")
            _write_bandwidth_csv(temporal, bw_path)
            _write_similarity_csv(spatial, sim_path)
            outputs += [bw_path, sim_path]
            params.update(
                {"chosen_k": k, "k_temporal": temporal.k_hat, "k_spatial": spatial.k_hat}
            )
        else:
            k = _parse_rank_int(rank)
            result = rsvd_denoise(fs, k, p=args.oversample, q=args.power_iters, seed=args.seed)
            params["chosen_k"] = k
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown method {args.method!r}")

    save_framestack(result, out)
    argv += ["--out", str(out)]
    write_manifest("denoise", argv, params, outputs, out)
    if "chosen_k" in params:
        print(f"wrote {out} (k={params['chosen_k']})")
    else:
        print(f"wrote {out}")
    return 0


def _parse_rank_int(text: str) -> int:
    try:
        k = int(text)
    except ValueError:
        raise UsageError(
            f"--rank must be an integer or one of {AUTO_RANKS}, got {text!r}"
        ) from None
    if k < 1:
        raise UsageError(f"--rank must be >= 1, got {k}")
    return k


def cmd_rank(args) -> int:
    fs = load_framestack(args.input)
    temporal, spatial = _estimate_ranks(fs, args.n_eval, args.tau)
    chosen = choose_rank(temporal, spatial, args.policy)
    prefix = Path(args.out_prefix)
    bw_path = prefix.parent / (prefix.name + "_bandwidth.csv")
    sim_path = prefix.parent / (prefix.name + "_similarity.csv")
    prefix.parent.mkdir(parents=True, exist_ok=True)
    _write_bandwidth_csv(temporal, bw_path)
    _write_similarity_csv(spatial, sim_path)
    argv = ["rank", "--input", args.input, "--tau", repr(args.tau),
            "--policy", args.policy, "--out-prefix", str(prefix)]
    if args.n_eval is not None:
        argv += ["--n-eval", str(args.n_eval)]
    params = {
        "input": args.input, "n_eval": args.n_eval, "tau": args.tau, "policy": args.policy,
        "k_temporal": temporal.k_hat, "k_spatial": spatial.k_hat, "k_chosen": chosen,
        "temporal_no_noise_floor": temporal.no_noise_floor,
    }
    write_manifest("rank", argv, params, [bw_path, sim_path], prefix.with_suffix(".json"))
    print(f"temporal k_hat={temporal.k_hat}"
          + (" (no noise floor found)" if temporal.no_noise_floor else ""))
    print(f"spatial  k_hat={spatial.k_hat}")
    print(f"chosen   k={chosen} (policy={args.policy})")
    return 0


def _parse_profile(text: str) -> int:
    if not text.startswith("x="):
        raise UsageError(f"--profile must look like 'x=<column>', got {text!r}")
    try:
        return int(text[2:])
    except ValueError:
        raise UsageError(f"--profile must look like 'x=<column>', got {text!r}") from None


def cmd_metrics(args) -> int:
    fs = load_framestack(args.input)
    ref = load_framestack(args.reference) if args.reference else None
    rois = None
    if args.rois:
        spec = json.loads(Path(args.rois).read_text())
        try:
            rois = RoiSet(
                signal_rois=tuple(tuple(int(v) for v in r) for r in spec["signal"]),
                noise_rois=tuple(tuple(int(v) for v in r) for r in spec["noise"]),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"{args.rois}: expected keys 'signal' and 'noise' "
                                  "with lists of [x0, z0, w, h]") from exc
    profile_x = _parse_profile(args.profile) if args.profile else None
    if ref is not None and ref.n_t != fs.n_t and 1 not in (ref.n_t, fs.n_t):
        raise ValidationError(
            f"reference has {ref.n_t} frames but input has {fs.n_t}; "
            "one of them must match or be a single frame"
        )
    if profile_x is not None and not 0 <= profile_x < fs.n_x:
        raise ValidationError(f"profile column {profile_x} out of range [0, {fs.n_x})")

    n_rows = fs.n_t if ref is None else max(fs.n_t, ref.n_t)
    reports = []
    for t in range(n_rows):
        frame = fs.samples[min(t, fs.n_t - 1)]
        row = {"frame_index": t}
        if ref is not None:
            ref_frame = ref.samples[min(t, ref.n_t - 1)]
            row["psnr_db"] = psnr(frame, ref_frame, form=args.psnr_form)
            row["ssim"] = ssim(frame, ref_frame)
            row["epi"] = epi(frame, ref_frame)
        if rois is not None:
            row["snr_db"] = roi_snr(frame, rois)
            row["cnr"] = roi_cnr(frame, rois)
        if profile_x is not None:
            row["fwhm_mm"] = fwhm(np.abs(frame[profile_x]), fs.dz_mm)
        reports.append(MetricsReport(**row))
    out = Path(args.out)
    write_reports_csv(reports, out)
    argv = ["metrics", "--input", args.input, "--psnr-form", args.psnr_form]
    if args.reference:
        argv += ["--reference", args.reference]
    if args.rois:
        argv += ["--rois", args.rois]
    if args.profile:
        argv += ["--profile", args.profile]
    argv += ["--out", str(out)]
    params = {"input": args.input, "reference": args.reference, "rois": args.rois,
              "profile": args.profile, "psnr_form": args.psnr_form, "rows": n_rows}
    write_manifest("metrics", argv, params, [out], out)
    print(f"wrote {out} ({n_rows} rows)")
    return 0


def _to_pgm_bytes(image: np.ndarray, dynamic_range_db: float) -> bytes:
    """Log-compress |image| into an 8-bit P5 PGM payload.

    The peak maps to 255 and anything at or below -dynamic_range dB maps
    to 0; an all-zero image yields an all-zero payload. Rows of the PGM
    run along the second axis of ``image``.
    """
    amp = np.abs(image)
    peak = amp.max()
    if peak == 0.0:
        u8 = np.zeros(image.shape, dtype=np.uint8)
    else:
        floor = peak * 10.0 ** (-dynamic_range_db / 20.0 - 16)
        db = 20.0 * np.log10(np.maximum(amp, floor) / peak)
        db = np.clip(db, -dynamic_range_db, 0.0)
        u8 = np.rint((db + dynamic_range_db) / dynamic_range_db * 255.0).astype(np.uint8)
    width, height = image.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    return header + u8.T.tobytes()


def cmd_export_image(args) -> int:
    fs = load_framestack(args.input)
    if (args.frame is None) == (args.mip is None):
        raise UsageError("exactly one of --frame or --mip is required")
    if args.frame is not None:
        if not 0 <= args.frame < fs.n_t:
            raise ValidationError(f"frame index {args.frame} out of range [0, {fs.n_t})")
        image = fs.samples[args.frame]
        source = {"frame": args.frame}
        argv_sel = ["--frame", str(args.frame)]
    else:
        axis = {"t": 0, "x": 1, "z": 2}[args.mip]
        image = np.abs(fs.samples).max(axis=axis)
        source = {"mip": args.mip}
        argv_sel = ["--mip", args.mip]
    out = Path(args.out)
    out.write_bytes(_to_pgm_bytes(image, args.dynamic_range))
    argv = ["export-image", "--input", args.input] + argv_sel + [
        "--dynamic-range", repr(args.dynamic_range), "--out", str(out)]
    params = {"input": args.input, "dynamic_range_db": args.dynamic_range, **source}
    write_manifest("export-image", argv, params, [out], out)
    print(f"wrote {out}")
    return 0


def cmd_bench(args) -> int:
    report = bench(
        n_x=args.nx, n_z=args.nz, n_t=args.nt, k=args.rank, reps=args.reps,
        stride=args.stride, seed=args.seed,
    )
    out = Path(args.out)
    with open(out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("n_x", "n_z", "n_t", "rank", "reps", "stride",
                         "seconds_per_window", "seconds_per_frame"))
        writer.writerow((report.n_x, report.n_z, report.n_t, report.rank, report.reps,
                         report.stride, repr(report.seconds_per_window),
                         repr(report.seconds_per_frame)))
    argv = ["bench", "--nx", str(args.nx), "--nz", str(args.nz), "--nt", str(args.nt),
            "--rank", str(args.rank), "--reps", str(args.reps), "--seed", str(args.seed)]
    if args.stride is not None:
        argv += ["--stride", str(args.stride)]
    argv += ["--out", str(out)]
    params = {"n_x": args.nx, "n_z": args.nz, "n_t": args.nt, "rank": args.rank,
              "reps": args.reps, "stride": report.stride, "seed": args.seed}
    write_manifest("bench", argv, params, [out], out)
    print(f"{report.n_x}x{report.n_z}x{report.n_t} rank {report.rank}: "
          f"{report.seconds_per_window * 1e3:.2f} ms/window, "
          f"{report.seconds_per_frame * 1e6:.1f} us/frame (stride {report.stride})")
    print("context: reference GPU implementations report ~10 ms/window at "
          "600x128x200 (~50 us/frame); CPU figures are not expected to match")
    return 0


def cmd_replay(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    if not isinstance(manifest, dict) or "argv" not in manifest:
        raise ValidationError(f"{args.manifest}: not a run manifest")
    return main(list(manifest["argv"]))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="padenoise",
        description="Spatiotemporal SVD denoising for photoacoustic frame stacks",
    )
    parser.add_argument("--version", action="version", version=f"padenoise {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic phantom stack")
    p.add_argument("--nx", type=int, default=DEFAULT_N_X)
    p.add_argument("--nz", type=int, default=DEFAULT_N_Z)
    p.add_argument("--nt", type=int, default=None,
                   help="optional cross-check against the schedule total")
    p.add_argument("--dx", type=float, default=DEFAULT_DX_MM, help="lateral pitch [mm]")
    p.add_argument("--dz", type=float, default=DEFAULT_DZ_MM, help="axial pitch [mm]")
    p.add_argument("--dt", type=float, default=DEFAULT_DT_S, help="frame period [s]")
    p.add_argument("--schedule", required=True,
                   help="motion groups as 'count:shift_mm,...', e.g. '25:0,25:1,25:2,25:-1'")
    p.add_argument("--snr-db", type=float, default=None,
                   help="target stack SNR in dB; omit for a noise-free stack")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fluence-z0", type=float, default=DEFAULT_FLUENCE_Z0_MM,
                   help="depth decay constant [mm]; 0 disables")
    p.add_argument("--vessels", default=None,
                   help="JSON file with [[cx_mm, cz_mm, radius_mm, intensity], ...]")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("denoise", help="denoise a stack")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=("stsvd", "avg", "dwt"), required=True)
    p.add_argument("--rank", default=None,
                   help="integer rank or auto-temporal|auto-spatial|auto-min (stsvd only)")
    p.add_argument("--oversample", type=int, default=DEFAULT_OVERSAMPLE)
    p.add_argument("--power-iters", type=int, default=DEFAULT_POWER_ITERS)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--window", type=int, default=None,
                   help="sliding-window length (stsvd streaming, or avg window)")
    p.add_argument("--stride", type=int, default=None, help="frames between window starts")
    p.add_argument("--levels", type=int, default=None, help="DWT decomposition depth")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU,
                   help="spatial-similarity threshold for auto ranks")
    p.add_argument("--n-eval", type=int, default=None,
                   help="singular vectors evaluated by the rank estimators")
    p.add_argument("--psnr-form", choices=("standard", "paper"), default="standard",
                   help=argparse.SUPPRESS)  # accepted for parity with metrics
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("rank", help="estimate the tissue-subspace rank")
    p.add_argument("--input", required=True)
    p.add_argument("--n-eval", type=int, default=None)
    p.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p.add_argument("--policy", choices=("min", "max", "temporal", "spatial"), default="min")
    p.add_argument("--out-prefix", required=True,
                   help="prefix for the diagnostics CSV files")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("metrics", help="compute image-quality metrics")
    p.add_argument("--input", required=True)
    p.add_argument("--reference", default=None, help="noise-free stack for PSNR/SSIM/EPI")
    p.add_argument("--rois", default=None, help="JSON file with signal/noise rectangles")
    p.add_argument("--profile", default=None, help="axial profile for FWHM, e.g. 'x=64'")
    p.add_argument("--psnr-form", choices=("standard", "paper"), default="standard")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("export-image", help="export a frame or MIP as binary PGM")
    p.add_argument("--input", required=True)
    p.add_argument("--frame", type=int, default=None)
    p.add_argument("--mip", choices=("t", "x", "z"), default=None,
                   help="maximum-intensity projection over this axis")
    p.add_argument("--dynamic-range", type=float, default=40.0, help="display window [dB]")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_image)

    p = sub.add_parser("bench", help="time the per-window denoising path")
    p.add_argument("--nx", type=int, default=128)
    p.add_argument("--nz", type=int, default=600)
    p.add_argument("--nt", type=int, default=200)
    p.add_argument("--rank", type=int, default=1)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", default="bench_report.csv")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("replay", help="re-execute a command from its manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
