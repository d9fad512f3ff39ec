#!/usr/bin/env python3
"""
PSOG simulator - command-line entry point

    psogsim.py render    --yaw 5 --pitch 0 --pupil 4 --out results
    psogsim.py calibrate --config run.json
    psogsim.py run       --config run.json --seed 7
    psogsim.py sweep     --config run.json --workers 8
    psogsim.py tradeoff  --config run.json
    psogsim.py shift     --config run.json
    psogsim.py sense     --config run.json --image eye.pgm --calibration calibration.json
    psogsim.py report    --out results

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

import argparse
import json
import os
import sys
import time

from psog import __version__
from psog.calibration import CalibrationModel, apply_calibration, calibrate_design
from psog.debug_logger import debug_error, debug_log
from psog.designs import DesignParams, compose_design, design_raw_output
from psog.errors import ConfigurationError, ParseError, PsogError
from psog.experiments import (generate_scanpath, run_shift_experiment, run_single, run_sweep,
                              tradeoff_design, tradeoff_optimize, unit_rng)
from psog.eye_render import (EyeState, export_eye_image, import_eye_image, pupil_diameter_at, read_sidecar,
                             write_sidecar)
from psog.metrics import METRIC_NAMES
from psog.results import (ResultsBundle, add_to_manifest, calibration_record, design_outputs_frame, fixations_frame,
                          metrics_frame, read_csv, sensor_outputs_frame, shift_curves_frame, shift_summary_frame,
                          shift_svgs, signal_frame, sweep_errors_frame, sweep_frame, sweep_heatmaps,
                          tradeoff_frame, tradeoffs_from_frame, write_results)
from psog.settings import RunConfig, apply_overrides, load_config

MODE_BY_COMMAND = {"run": "single", "sweep": "sweep", "tradeoff": "tradeoff", "shift": "shift"}


class UsageError(Exception):
    pass


class CliParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides output.directory)")
    common.add_argument("--seed", type=int, metavar="N", help="64-bit seed (overrides output.seed)")
    common.add_argument("--workers", type=int, default=1, metavar="N",
                        help="parallel work units; never changes results")

    parser = CliParser(prog="psogsim", description="Photosensor oculography simulator")
    parser.add_argument("--version", action="version", version=f"psogsim {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=CliParser)
    sub.required = True

    render = sub.add_parser("render", parents=[common], help="render one eye image (P5 + sidecar)")
    render.add_argument("--yaw", type=float, default=0.0)
    render.add_argument("--pitch", type=float, default=0.0)
    render.add_argument("--pupil", type=float, default=4.0)
    sub.add_parser("calibrate", parents=[common], help="calibrate the configured design")
    sub.add_parser("run", parents=[common], help="single run: calibrate, simulate, score")
    sub.add_parser("sweep", parents=[common], help="parameter sweep over the configured grid")
    sub.add_parser("tradeoff", parents=[common], help="sweep followed by the trade-off search")
    sub.add_parser("shift", parents=[common],
                   help="sensor-shift curve clusters (trade-off parameters unless design.params is set)")
    sense = sub.add_parser("sense", parents=[common], help="sensor and design outputs for an imported P5 image")
    sense.add_argument("--image", required=True, metavar="PGM", help="binary P5 graymap")
    sense.add_argument("--sidecar", metavar="JSON", help="projection metadata (default: image path with .json)")
    sense.add_argument("--calibration", metavar="JSON", help="calibration.json used to estimate the gaze")
    sub.add_parser("report", parents=[common], help="SVG plots from existing result tables")
    return parser


def _design(config: RunConfig):
    design_config = config.design
    return compose_design(design_config.name, design_config.effective_params,
                          design_config.effective_vertical_params, config.scene.eye_model,
                          design_config.anchors, design_config.d1_vertical_mode)


def _param_dicts(config: RunConfig):
    name = config.design.name
    params = config.design.effective_params.to_dict(name)
    vertical = config.design.vertical_params.to_dict(name) if config.design.vertical_params else None
    return params, vertical


def cmd_render(args, config: RunConfig, bundle: ResultsBundle):
    state = EyeState(args.yaw, args.pitch, args.pupil)
    image = config.build_scene().render(state)
    payload, sidecar = export_eye_image(image)
    bundle.add("eye.pgm", payload)
    bundle.add("eye.json", write_sidecar(dict(sidecar, yaw=state.yaw, pitch=state.pitch,
                                              pupil_diameter=state.pupil_diameter)))


def cmd_calibrate(args, config: RunConfig, bundle: ResultsBundle):
    design = _design(config)
    calibration = calibrate_design(design, config.build_scene())
    params, vertical = _param_dicts(config)
    bundle.add("calibration.json", calibration_record(design, params, calibration, vertical))
    print(f"✅ {design.name} calibrated: residual h={calibration.fit_residual_h:.3g}°, "
          f"v={calibration.fit_residual_v:.3g}°")


def cmd_run(args, config: RunConfig, bundle: ResultsBundle):
    scene = config.build_scene()
    design = _design(config)
    gt = generate_scanpath(config.scanpath, config.experiment.settle_ms)
    rng = unit_rng(config.output.seed, 0) if scene.sensor.effective_noise > 0 else None
    run = run_single(design, scene, gt, rng)
    params, vertical = _param_dicts(config)
    bundle.add("calibration.json", calibration_record(design, params, run.calibration, vertical))
    bundle.add_csv("metrics.csv", metrics_frame(design, params, run.report))
    bundle.add_csv("fixations.csv", fixations_frame(gt))
    bundle.add_csv("signal.csv", signal_frame(gt, run.signal, pupil_diameter_at(gt.t, scene.dilation)))
    for name in METRIC_NAMES:
        scale = 100.0 if name.startswith("cross") else 1.0
        unit = "%" if scale == 100.0 else "°"
        print(f"   {name}: {run.report.summary[name + '_mean'] * scale:.4g}{unit} "
              f"± {run.report.summary[name + '_std'] * scale:.4g}{unit}")


def _sweep(args, config: RunConfig, bundle: ResultsBundle):
    grid = config.design.effective_grid
    print(f"🔍 Sweeping {grid.design}: {grid.size} cells, {args.workers} worker(s)")
    gt = generate_scanpath(config.scanpath, config.experiment.settle_ms)
    result = run_sweep(grid, config.build_scene(), gt, config.output.seed, args.workers,
                       config.design.anchors, config.design.d1_vertical_mode)
    frame = sweep_frame(result)
    bundle.add_csv("sweep.csv", frame)
    if result.failures:
        print(f"⚠️  {len(result.failures)} cell(s) failed, see sweep_errors.csv")
        bundle.add_csv("sweep_errors.csv", sweep_errors_frame(result))
    if bundle.wants("svg"):
        for name, text in sweep_heatmaps(frame, grid.names, grid.design).items():
            bundle.add(name, text)
    return result


def cmd_sweep(args, config: RunConfig, bundle: ResultsBundle):
    _sweep(args, config, bundle)


def _tradeoff(args, config: RunConfig, bundle: ResultsBundle):
    result = _sweep(args, config, bundle)
    tradeoffs = tradeoff_optimize(result)
    bundle.add_csv("tradeoff.csv", tradeoff_frame(tradeoffs, result.grid.names))
    for outcome in tradeoffs:
        print(f"⚖️  {'+'.join(outcome.metrics)}: {dict(zip(result.grid.names, outcome.params))}")
    return tradeoffs


def cmd_tradeoff(args, config: RunConfig, bundle: ResultsBundle):
    _tradeoff(args, config, bundle)


def _shift_design(args, config: RunConfig, bundle: ResultsBundle, scene):
    """Configured parameters if given, else the trade-off parameters (existing tradeoff.csv or a fresh search)"""
    if config.design.params is not None:
        params, vertical = _param_dicts(config)
        return _design(config), params, vertical

    name = config.design.name
    directory = config.output.directory
    if os.path.exists(os.path.join(directory, "tradeoff.csv")):
        print(f"⚖️  Using trade-off parameters from {os.path.join(directory, 'tradeoff.csv')}")
        tradeoffs = tradeoffs_from_frame(read_csv(directory, "tradeoff.csv"), name)
    else:
        print("⚖️  No design parameters configured: running the trade-off search first")
        tradeoffs = _tradeoff(args, config, bundle)
    design = tradeoff_design(tradeoffs, scene, config.design.anchors, config.design.d1_vertical_mode)
    params = DesignParams.from_values(name, tradeoffs[0].params).to_dict(name)
    vertical = DesignParams.from_values(name, tradeoffs[1].params).to_dict(name) if len(tradeoffs) > 1 else None
    debug_log("shift_design", {"design": name, "params": params, "vertical_params": vertical})
    return design, params, vertical


def cmd_shift(args, config: RunConfig, bundle: ResultsBundle):
    scene = config.build_scene()
    design, params, vertical = _shift_design(args, config, bundle, scene)
    calibration = calibrate_design(design, scene)
    shift = config.experiment.shift
    print(f"↔️  Shift experiment: {len(shift.combinations)} combination(s) x {len(shift.shift_values)} shifts "
          f"x {len(shift.eye_positions)} positions")
    clusters = run_shift_experiment(design, shift, scene, calibration, config.output.seed, args.workers)
    bundle.add("calibration.json", calibration_record(design, params, calibration, vertical))
    curves = shift_curves_frame(clusters)
    bundle.add_csv("shift_curves.csv", curves)
    bundle.add_csv("shift_summary.csv", shift_summary_frame(clusters))
    if bundle.wants("svg"):
        for name, text in shift_svgs(curves).items():
            bundle.add(name, text)


def _read_input(path: str, mode: str = "rb"):
    try:
        with open(path, mode) as f:
            return f.read()
    except OSError as e:
        raise ConfigurationError(f"cannot read {path}: {e.strerror}")


def _read_json(path: str):
    try:
        return json.loads(_read_input(path, "r"))
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON in {path}: {e.msg}", line=e.lineno)


def cmd_sense(args, config: RunConfig, bundle: ResultsBundle):
    sidecar_path = args.sidecar or os.path.splitext(args.image)[0] + ".json"
    image = import_eye_image(_read_input(args.image), read_sidecar(_read_input(sidecar_path, "r")))
    scene = config.build_scene()
    design = _design(config)
    values = scene.image_sensor_values(design, image)
    h_raw, v_raw = design_raw_output(design, scene.sensor.convert(values))
    estimate = None
    if args.calibration:
        record = _read_json(args.calibration)
        if record.get("design") != design.name:
            raise ConfigurationError(f"calibration was fitted for {record.get('design')}", key="design.name")
        estimate = apply_calibration(CalibrationModel.from_dict(record["calibration"]), h_raw, v_raw)
        print(f"🎯 Estimated gaze: yaw={estimate[0]:.4g}°, pitch={estimate[1]:.4g}°")
    print(f"👁️  {design.name} on {args.image}: h_raw={h_raw:.6g}, v_raw={v_raw:.6g}")
    bundle.add_csv("sensor_outputs.csv", sensor_outputs_frame(design, values))
    bundle.add_csv("design_outputs.csv", design_outputs_frame(design, h_raw, v_raw, estimate))


def cmd_report(args, config: RunConfig):
    directory = config.output.directory
    files = {}
    if os.path.exists(os.path.join(directory, "sweep.csv")):
        frame = read_csv(directory, "sweep.csv")
        names = [column for column in frame.columns if not column.startswith(("acc_", "cross_"))]
        files.update(sweep_heatmaps(frame, names, config.design.name))
    if os.path.exists(os.path.join(directory, "shift_curves.csv")):
        files.update(shift_svgs(read_csv(directory, "shift_curves.csv")))
    if not files:
        raise PsogError(f"no sweep.csv or shift_curves.csv in {directory}")
    for path in add_to_manifest(directory, files):
        print(f"📄 {path}")


COMMANDS = {
    "render": cmd_render,
    "calibrate": cmd_calibrate,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "tradeoff": cmd_tradeoff,
    "shift": cmd_shift,
    "sense": cmd_sense,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.time()
    try:
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise UsageError("--seed must be a 64-bit unsigned integer")
        config = apply_overrides(load_config(args.config), seed=args.seed, directory=args.out,
                                 mode=MODE_BY_COMMAND.get(args.command))
        debug_log("cli_start", {"command": args.command, "workers": args.workers, "seed": config.output.seed})

        if args.command == "report":
            cmd_report(args, config)
        else:
            bundle = ResultsBundle(config)
            COMMANDS[args.command](args, config, bundle)
            for path in write_results(bundle, config.output.directory):
                print(f"📄 {path}")
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"❌ {e}", file=sys.stderr)
        return 1
    except (ConfigurationError, ParseError) as e:
        debug_error("cli_config_error", str(e), {"command": args.command})
        print(f"❌ Configuration error: {e}", file=sys.stderr)
        return 1
    except PsogError as e:
        debug_error("cli_runtime_error", str(e), {"command": args.command})
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        debug_error("cli_unexpected_error", str(e), {"command": args.command, "type": type(e).__name__})
        print(f"❌ Unexpected error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2

    print(f"✅ {args.command} finished in {time.time() - start:.1f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
