"""Command-line interface.

Every failure prints exactly one JSON line ``{"error": <code>, "message": ...}``
to stderr and exits nonzero:

====  ==========================================
code  meaning
====  ==========================================
2     usage error (unknown flag, bad value)
3     file missing or malformed container
4     shape mismatch between inputs
5     restoration run failed
1     anything else
====  ==========================================
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .bench import band_scaling, scaling_summary
from .cube import DimensionError, HsiCube
from .degradation import MaskOp, make_cassi, make_hadamard_cs, make_mask, operator_from_dict
from .io import HsiFormatError, RunReport, file_digest, read_hsi, write_band_csv, write_hsi, write_pgm, write_rows_csv
from .pipeline import NgmeetConfig, NgmeetError, RestorationTask, ngmeet_run
from .quality import evaluate
from .synthetic import add_gaussian_noise, synth_lowrank_hsi


class CliError(Exception):
    def __init__(self, code: str, message: str, status: int):
        super().__init__(message)
        self.code = code
        self.status = status


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, 2)


def _sidecar(path) -> Path:
    return Path(str(path) + ".json")


def _load_config(path: Optional[str]) -> NgmeetConfig:
    if path is None:
        return NgmeetConfig()
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CliError("bad_config", f"{path}: {exc}", 2) from None
    try:
        return NgmeetConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise CliError("bad_config", f"{path}: {exc}", 2) from None


def _measurement_to_cube(arr: np.ndarray) -> HsiCube:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    return HsiCube(arr[None])


def _write_outputs(args, result, task: RestorationTask, config: NgmeetConfig, inputs: dict, ref: Optional[HsiCube]):
    write_hsi(args.out, result.x_hat)
    metrics = evaluate(result.x_hat, ref).to_dict() if ref is not None else None
    report = RunReport(
        command=args.command,
        config=config.to_dict(),
        task=task.describe(),
        seed=config.seed,
        inputs=inputs,
        metrics=metrics,
        iterations=result.log.to_list(),
        timing={"total": result.total_time, "stage_a": result.log.stage_a_total, "stage_b": result.log.stage_b_total},
        extra={"sigma0": result.sigma0, "K0": result.K0, "output": str(args.out)},
    )
    if ref is not None and task.kind != "reconstruct":
        report.extra["input_metrics"] = evaluate(task.observation, ref).to_dict()
    summary = {"output": str(args.out), "iterations": len(result.log), "K0": result.K0, "sigma0": result.sigma0}
    if metrics is not None:
        summary.update(psnr=metrics["psnr_db"], ssim=metrics["ssim"], sam=metrics["sam_degrees"])
    if args.report:
        report.write(args.report)
        summary["report"] = str(args.report)
        if not args.no_figures:
            summary["figures"] = [str(p) for p in _report_figures(args, report, result, task, ref)]
    if args.csv:
        if metrics is None:
            raise CliError("usage", "--csv needs --ref to compute per-band metrics", 2)
        write_band_csv(args.csv, metrics)
    if args.dump_band is not None:
        summary["band_dump"] = str(_dump_band(result.x_hat, args.dump_band, args.out))
    print(json.dumps(summary))


def _report_figures(args, report: RunReport, result, task, ref):
    from . import plotting

    stem = Path(args.report).with_suffix("")
    paths = [plotting.plot_iterations(report.iterations, f"{stem}_iterations.png")]
    if report.metrics is not None:
        paths.append(plotting.plot_band_metrics(report.metrics, f"{stem}_bands.png"))
    band = args.dump_band if args.dump_band is not None else result.x_hat.bands // 2
    cubes, titles = [result.x_hat], ["restored"]
    if isinstance(task.observation, HsiCube):
        cubes.insert(0, task.observation)
        titles.insert(0, "observed")
    if ref is not None:
        cubes.append(ref)
        titles.append("reference")
    paths.append(plotting.plot_bands(cubes, titles, band, f"{stem}_band{band}.png"))
    return paths


def _dump_band(cube: HsiCube, k: int, out) -> Path:
    if not 0 <= k < cube.bands:
        raise CliError("usage", f"--dump-band {k} outside 0..{cube.bands - 1}", 2)
    path = Path(out).with_suffix("").with_name(Path(out).stem + f"_band{k}.pgm")
    write_pgm(path, cube.data[k], 0.0, cube.value_scale)
    return path


def _reference(args) -> Optional[HsiCube]:
    return read_hsi(args.ref) if getattr(args, "ref", None) else None


def cmd_denoise(args):
    y = read_hsi(args.input)
    config = _load_config(args.config)
    sigma = None if args.estimate_noise else args.sigma
    task = RestorationTask.denoise(y, sigma)
    ref = _reference(args)
    result = ngmeet_run(task, config, ground_truth=ref)
    _write_outputs(args, result, task, config, {"input": {"path": args.input, "sha256": file_digest(args.input)}}, ref)


def cmd_inpaint(args):
    y = read_hsi(args.input)
    mask_cube = read_hsi(args.mask)
    if mask_cube.shape != y.shape:
        raise CliError("shape_mismatch", f"mask {mask_cube.shape} does not match observation {y.shape}", 4)
    op = MaskOp(mask_cube.data != 0)
    config = _load_config(args.config)
    task = RestorationTask.inpaint(y.with_data(op.apply(y)), op)
    ref = _reference(args)
    result = ngmeet_run(task, config, ground_truth=ref)
    inputs = {
        "input": {"path": args.input, "sha256": file_digest(args.input)},
        "mask": {"path": args.mask, "sha256": file_digest(args.mask)},
    }
    _write_outputs(args, result, task, config, inputs, ref)


def _operator_for(args, meas: np.ndarray):
    side = _sidecar(args.measurement)
    desc = json.loads(side.read_text()) if side.exists() else {}
    if args.shape:
        try:
            M, N, B = (int(v) for v in args.shape.split(","))
        except ValueError:
            raise CliError("usage", f"--shape expects M,N,B, got {args.shape!r}", 2) from None
        desc.update(rows=M, cols=N, bands=B)
    desc["kind"] = args.operator
    if args.seed is not None:
        desc["seed"] = args.seed
    if args.operator == "hadamard" and args.sr is not None:
        desc["sampling_ratio"] = args.sr
    if args.operator == "cassi" and args.density is not None:
        desc["mask_density"] = args.density
    missing = [k for k in ("rows", "cols", "bands") if k not in desc]
    if args.operator == "hadamard" and "sampling_ratio" not in desc:
        missing.append("sampling_ratio (--sr)")
    if missing:
        raise CliError("usage", f"operator needs {', '.join(missing)}; pass --shape/--sr or keep the .json sidecar", 2)
    op = operator_from_dict(desc)
    flat = meas.reshape(-1) if args.operator == "hadamard" else meas
    if flat.shape != tuple(op.measurement_shape):
        raise CliError("shape_mismatch", f"measurement {meas.shape} does not match operator {op.measurement_shape}", 4)
    return op, flat


def cmd_reconstruct(args):
    meas_cube = read_hsi(args.measurement)
    meas = meas_cube.data[0]
    op, flat = _operator_for(args, meas)
    config = _load_config(args.config)
    task = RestorationTask.reconstruct(flat, op)
    ref = _reference(args)
    result = ngmeet_run(task, config, ground_truth=ref)
    inputs = {"measurement": {"path": args.measurement, "sha256": file_digest(args.measurement)}, "operator": op.describe()}
    _write_outputs(args, result, task, config, inputs, ref)


def cmd_simulate(args):
    kind = args.kind
    if kind == "synth":
        cube = synth_lowrank_hsi(args.rows, args.cols, args.bands, args.rank, args.smoothness, args.seed, args.decay)
        write_hsi(args.out, cube)
        info = {"output": args.out, "shape": list(cube.shape)}
    else:
        if not args.input:
            raise CliError("usage", f"simulate {kind} needs --in", 2)
        x = read_hsi(args.input)
        M, N, B = x.shape
        if kind == "noise":
            if args.sigma is None:
                raise CliError("usage", "simulate noise needs --sigma", 2)
            write_hsi(args.out, add_gaussian_noise(x, args.sigma, args.seed))
            info = {"output": args.out, "sigma": args.sigma}
        elif kind == "mask":
            op = make_mask(M, N, B, _need_sr(args), args.seed)
            write_hsi(args.out, x.with_data(op.apply(x)))
            mask_out = args.mask_out or str(Path(args.out).with_suffix("")) + "_mask.hsi"
            write_hsi(mask_out, x.with_data(op.mask.astype(np.float64)))
            info = {"output": args.out, "mask": mask_out, "sampling_ratio": op.sampling_ratio}
        else:
            op = make_hadamard_cs(M, N, B, _need_sr(args), args.seed) if kind == "hadamard" else make_cassi(M, N, B, args.density or 0.5, args.seed)
            write_hsi(args.out, _measurement_to_cube(op.apply(x)))
            _sidecar(args.out).write_text(json.dumps(op.describe(), indent=2) + "\n")
            info = {"output": args.out, "operator": op.describe(), "sidecar": str(_sidecar(args.out))}
    print(json.dumps(info))


def _need_sr(args) -> float:
    if args.sr is None:
        raise CliError("usage", f"simulate {args.kind} needs --sr", 2)
    return args.sr


def cmd_metrics(args):
    x = read_hsi(args.x)
    ref = read_hsi(args.ref)
    if x.shape != ref.shape:
        raise CliError("shape_mismatch", f"{x.shape} vs {ref.shape}", 4)
    rep = evaluate(x, ref).to_dict()
    if args.csv:
        write_band_csv(args.csv, rep)
    if args.json:
        Path(args.json).write_text(json.dumps(rep, indent=2) + "\n")
    print(json.dumps({k: rep[k] for k in ("psnr_db", "psnr_infinite", "ssim", "sam_degrees", "sam_skipped_pixels")}))


def cmd_bench(args):
    try:
        bands = [int(b) for b in args.bands.split(",") if b]
    except ValueError:
        raise CliError("usage", f"--bands expects comma-separated integers, got {args.bands!r}", 2) from None
    rows = band_scaling(bands, args.rows, args.cols, args.sigma, args.rank, args.repeats, args.seed)
    summary = scaling_summary(rows)
    if args.csv:
        write_rows_csv(args.csv, rows)
    if args.report:
        Path(args.report).write_text(json.dumps({"rows": rows, "summary": summary}, indent=2) + "\n")
        if not args.no_figures:
            from .plotting import plot_stage_times

            plot_stage_times(rows, str(Path(args.report).with_suffix("")) + "_stages.png")
    print(f"{'bands':>6} {'stage A (s)':>12} {'stage B (s)':>12} {'total (s)':>10}")
    for r in rows:
        print(f"{r['bands']:>6} {r['stage_a']:>12.3f} {r['stage_b']:>12.3f} {r['total']:>10.3f}")
    print(json.dumps(summary))


def _add_run_outputs(p):
    p.add_argument("--out", required=True, help="restored cube (HSI1)")
    p.add_argument("--config", help="JSON document with NgmeetConfig fields")
    p.add_argument("--ref", help="ground truth cube; enables metrics in the report")
    p.add_argument("--report", help="JSON run report; figures are written next to it")
    p.add_argument("--csv", help="per-band metrics CSV (needs --ref)")
    p.add_argument("--dump-band", type=int, help="also write band k of the result as an 8-bit PGM")
    p.add_argument("--no-figures", action="store_true", help="skip the report figures")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ngmeet", description="Hyperspectral restoration by alternating spectral subspace and non-local denoising.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("denoise", help="remove Gaussian noise")
    p.add_argument("--in", dest="input", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--sigma", type=float, help="noise std on the cube's value scale")
    g.add_argument("--estimate-noise", action="store_true", help="estimate the noise std from the data")
    _add_run_outputs(p)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("inpaint", help="fill missing voxels")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--mask", required=True, help="cube with nonzero entries at observed voxels")
    _add_run_outputs(p)
    p.set_defaults(func=cmd_inpaint)

    p = sub.add_parser("reconstruct", help="recover a cube from compressive measurements")
    p.add_argument("--measurement", required=True)
    p.add_argument("--operator", choices=("hadamard", "cassi"), required=True)
    p.add_argument("--sr", type=float, help="sampling ratio of the Hadamard operator")
    p.add_argument("--density", type=float, help="coded-aperture density of the CASSI operator")
    p.add_argument("--shape", help="M,N,B of the unknown cube (default: from the .json sidecar)")
    p.add_argument("--seed", type=int, help="operator seed (default: from the sidecar)")
    _add_run_outputs(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("simulate", help="make synthetic data or degrade a cube")
    p.add_argument("kind", choices=("synth", "noise", "mask", "hadamard", "cassi"))
    p.add_argument("--in", dest="input")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float)
    p.add_argument("--sr", type=float)
    p.add_argument("--density", type=float)
    p.add_argument("--mask-out")
    p.add_argument("--rows", type=int, default=64)
    p.add_argument("--cols", type=int, default=64)
    p.add_argument("--bands", type=int, default=31)
    p.add_argument("--rank", type=int, default=6)
    p.add_argument("--smoothness", type=float, default=8.0)
    p.add_argument("--decay", type=float, default=0.6)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("metrics", help="PSNR / SSIM / SAM of a cube against a reference")
    p.add_argument("--x", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--csv")
    p.add_argument("--json")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("bench", help="stage timings versus band count")
    p.add_argument("--bands", default="32,64,128")
    p.add_argument("--rows", type=int, default=64)
    p.add_argument("--cols", type=int, default=64)
    p.add_argument("--sigma", type=float, default=50.0)
    p.add_argument("--rank", type=int, default=4)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv")
    p.add_argument("--report")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_bench)
    return parser


def _fail(code: str, message: str, status: int) -> int:
    print(json.dumps({"error": code, "message": " ".join(str(message).split())}), file=sys.stderr)
    return status


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except CliError as exc:
        return _fail(exc.code, str(exc), exc.status)
    except HsiFormatError as exc:
        return _fail(exc.code, str(exc), 3)
    except FileNotFoundError as exc:
        return _fail("file_not_found", f"{exc.filename}: {exc.strerror}", 3)
    except OSError as exc:
        return _fail("io_error", str(exc), 3)
    except DimensionError as exc:
        return _fail("shape_mismatch", str(exc), 4)
    except NgmeetError as exc:
        return _fail("run_failed", str(exc), 5)
    except ValueError as exc:
        return _fail("invalid_value", str(exc), 2)
    except Exception as exc:  # pragma: no cover - last resort, still one line
        return _fail("internal", f"{type(exc).__name__}: {exc}", 1)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
