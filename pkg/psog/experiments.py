"""
Experiment pipelines

Scanpath generation, end-to-end signal simulation, parameter sweeps, the
trade-off search over sweep surfaces and sensor-shift curve clusters.
Sweep cells and shift units are independent work units run through joblib;
each one derives its random generator from (seed, unit index), so results do
not depend on the worker count.
"""

import itertools
import time
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from .calibration import CALIBRATION_PUPIL_MM, CalibrationModel, apply_calibration, calibrate_design
from .debug_logger import debug_error, debug_log, debug_timing
from .designs import (DesignAnchors, DesignParams, PsogDesign, build_design, check_param_value,
                      compose_design, design_raw_output, param_axes)
from .errors import ConfigurationError, ContractError, PsogError
from .eye_render import pupil_diameter_at
from .metrics import (DEFAULT_SETTLE_MS, GazeSignal, MetricReport, build_metric_report,
                      mae_between_curves, segment_fixations)
from .scene import Scene, quantize_state


def _grid(start: float, stop: float, step: float) -> Tuple[float, ...]:
    count = int(round((stop - start) / step)) + 1
    return tuple(float(round(start + k * step, 10)) for k in range(count))


def unit_rng(seed: int, unit_index: int) -> np.random.Generator:
    """Independent generator for one work unit"""
    return np.random.default_rng(np.random.SeedSequence([seed, unit_index]))


# Scanpath

@dataclass(frozen=True)
class ScanpathConfig:
    """Jumping-point stimulus: center dwells, then +a, 0, -a, 0 per amplitude on H then V"""
    sample_rate: float = 1000.0
    dwell_seconds: float = 1.0
    amplitudes: Tuple[float, ...] = (2.5, 5.0, 7.5, 10.0)
    initial_center_dwells: int = 4
    ramp_ms: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in self.amplitudes))
        if self.sample_rate <= 0:
            raise ConfigurationError("must be > 0", key="scanpath.sample_rate")
        if self.dwell_seconds <= 0:
            raise ConfigurationError("must be > 0", key="scanpath.dwell_seconds")
        if not self.amplitudes:
            raise ConfigurationError("at least one amplitude is required", key="scanpath.amplitudes")
        if any(a <= 0 or a > 45.0 for a in self.amplitudes) or any(
                b <= a for a, b in zip(self.amplitudes, self.amplitudes[1:])):
            raise ConfigurationError("must be positive, at most 45 degrees and strictly increasing",
                                     key="scanpath.amplitudes")
        if not isinstance(self.initial_center_dwells, int) or self.initial_center_dwells < 0:
            raise ConfigurationError("must be an integer >= 0", key="scanpath.initial_center_dwells")
        if self.ramp_ms < 0:
            raise ConfigurationError("must be >= 0", key="scanpath.ramp_ms")
        if self.ramp_samples >= self.dwell_samples:
            raise ConfigurationError("ramp must be shorter than a dwell", key="scanpath.ramp_ms")

    @property
    def dwell_samples(self) -> int:
        return max(1, int(round(self.dwell_seconds * self.sample_rate)))

    @property
    def ramp_samples(self) -> int:
        return int(round(self.ramp_ms * self.sample_rate / 1000.0))

    def targets(self) -> List[Tuple[float, float]]:
        targets = [(0.0, 0.0)] * self.initial_center_dwells
        for axis in ("H", "V"):
            for a in self.amplitudes:
                for value in (a, 0.0, -a, 0.0):
                    targets.append((value, 0.0) if axis == "H" else (0.0, value))
        return targets


def generate_scanpath(config: ScanpathConfig, settle_ms: float = DEFAULT_SETTLE_MS) -> GazeSignal:
    """Ground-truth step signal with dwell intervals and fixation labels"""
    targets = np.array(config.targets(), dtype=float)
    n = config.dwell_samples
    h = np.repeat(targets[:, 0], n)
    v = np.repeat(targets[:, 1], n)

    ramp = config.ramp_samples
    if ramp:
        fractions = np.arange(1, ramp + 1) / (ramp + 1.0)
        for k in range(1, len(targets)):
            prev, cur = targets[k - 1], targets[k]
            h[k * n:k * n + ramp] = prev[0] + (cur[0] - prev[0]) * fractions
            v[k * n:k * n + ramp] = prev[1] + (cur[1] - prev[1]) * fractions

    dwells = tuple((k * n, (k + 1) * n) for k in range(len(targets)))
    signal = GazeSignal.from_samples(config.sample_rate, h, v, dwells=dwells)
    return signal.with_fixations(segment_fixations(signal, settle_ms))


# Signal simulation

def simulate_signal(design: PsogDesign, scene: Scene, gt: GazeSignal, calibration: CalibrationModel,
                    rng: Optional[np.random.Generator] = None) -> GazeSignal:
    """Estimated gaze for a ground-truth signal, sample-aligned with it

    Each distinct quantized eye state is rendered and sensed once; sensor
    noise is then drawn per sample.
    """
    start = time.time()
    pupil = pupil_diameter_at(gt.t, scene.dilation)
    keys = np.array([quantize_state(y, p, d) for y, p, d in zip(gt.h, gt.v, pupil)], dtype=np.int64)
    unique_keys, inverse = np.unique(keys, axis=0, return_inverse=True)
    unique_values = np.array([scene.sensor_values_for_key(design, tuple(int(k) for k in key))
                              for key in unique_keys])
    values = scene.sensor.measure(unique_values[np.ravel(inverse)], rng)
    h_raw, v_raw = design_raw_output(design, values)
    yaw, pitch = apply_calibration(calibration, h_raw, v_raw)
    debug_timing("simulate_signal", (time.time() - start) * 1000, design=design.name,
                 samples=len(gt), unique_states=len(unique_keys))
    return GazeSignal(gt.sample_rate, gt.t, yaw, pitch, gt.fixations, gt.dwells)


@dataclass(frozen=True, eq=False)
class SingleRun:
    design: PsogDesign
    calibration: CalibrationModel
    signal: GazeSignal
    report: MetricReport


def run_single(design: PsogDesign, scene: Scene, gt: GazeSignal,
               rng: Optional[np.random.Generator] = None) -> SingleRun:
    """Calibrate a design, simulate the ground-truth signal and score it"""
    calibration = calibrate_design(design, scene)
    signal = simulate_signal(design, scene, gt, calibration, rng)
    return SingleRun(design, calibration, signal, build_metric_report(signal, gt))


# Parameter sweeps

@dataclass(frozen=True)
class SweepGrid:
    """Per-parameter value lists of one design, iterated lexicographically"""
    design: str
    axes: Tuple[Tuple[str, Tuple[float, ...]], ...]

    def __post_init__(self):
        names = param_axes(self.design)
        given = dict(self.axes)
        for key in given:
            if key not in names:
                raise ConfigurationError(f"not a parameter of design {self.design}", key=f"design.grid.{key}")
        axes = []
        for name in names:
            if name not in given:
                raise ConfigurationError("missing grid axis", key=f"design.grid.{name}")
            values = tuple(sorted(set(float(x) for x in given[name])))
            if not values:
                raise ConfigurationError("grid axis is empty", key=f"design.grid.{name}")
            for value in values:
                check_param_value(name, value, "design.grid")
            axes.append((name, values))
        object.__setattr__(self, "axes", tuple(axes))

    @classmethod
    def full_grid(cls, design: str) -> "SweepGrid":
        """Full sweep ranges: sizes 0.5-12 mm by 0.5, angles 5-45 by 5, positions -2-2 mm by 0.5"""
        full = {
            "length": _grid(0.5, 12.0, 0.5), "width": _grid(0.5, 12.0, 0.5),
            "diameter": _grid(0.5, 12.0, 0.5), "angle": _grid(5.0, 45.0, 5.0),
            "pos_x": _grid(-2.0, 2.0, 0.5), "pos_y": _grid(-2.0, 2.0, 0.5),
        }
        return cls(design, tuple((name, full[name]) for name in param_axes(design)))

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self.axes)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(len(values) for _, values in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def cells(self) -> List[Tuple[float, ...]]:
        return list(itertools.product(*(values for _, values in self.axes)))


@dataclass(frozen=True, eq=False)
class SweepCell:
    index: int
    params: Tuple[float, ...]
    report: Optional[MetricReport] = None
    calibration: Optional[CalibrationModel] = None
    error: Optional[str] = None

    def value(self, metric: str) -> float:
        if self.report is None:
            return float("nan")
        return self.report.summary[metric]


@dataclass(frozen=True, eq=False)
class SweepResult:
    grid: SweepGrid
    cells: Tuple[SweepCell, ...]

    def surface(self, metric: str) -> np.ndarray:
        """Metric values shaped like the grid (NaN for failed cells)"""
        return np.array([cell.value(metric) for cell in self.cells]).reshape(self.grid.shape)

    def optimum(self, metric: str) -> float:
        values = np.array([cell.value(metric) for cell in self.cells])
        finite = values[np.isfinite(values)]
        return float(finite.min()) if finite.size else float("nan")

    @property
    def failures(self) -> List[SweepCell]:
        return [cell for cell in self.cells if cell.error is not None]


def _run_cell(index: int, params_values: Tuple[float, ...], grid: SweepGrid, scene: Scene, gt: GazeSignal,
              seed: int, anchors: Optional[DesignAnchors], d1_vertical_mode: str) -> SweepCell:
    start = time.time()
    try:
        params = DesignParams.from_values(grid.design, params_values)
        design = build_design(grid.design, params, scene.model, anchors, d1_vertical_mode)
        rng = unit_rng(seed, index) if scene.sensor.effective_noise > 0 else None
        run = run_single(design, scene, gt, rng)
        cell = SweepCell(index, params_values, run.report, run.calibration)
    except (PsogError, ArithmeticError, ValueError, np.linalg.LinAlgError) as e:
        debug_error("sweep_cell_failed", str(e), {"index": index, "params": list(params_values)})
        return SweepCell(index, params_values, error=f"{type(e).__name__}: {e}")
    debug_timing("sweep_cell", (time.time() - start) * 1000, index=index, params=list(params_values))
    return cell


def run_sweep(grid: SweepGrid, scene: Scene, gt: GazeSignal, seed: int = 0, workers: int = 1,
              anchors: Optional[DesignAnchors] = None, d1_vertical_mode: str = "difference") -> SweepResult:
    """Evaluate every grid cell; failures are recorded per cell"""
    cells = grid.cells()
    debug_log("sweep_start", {"design": grid.design, "cells": len(cells), "workers": workers})
    results = Parallel(n_jobs=workers, prefer="threads")(
        delayed(_run_cell)(index, values, grid, scene, gt, seed, anchors, d1_vertical_mode)
        for index, values in enumerate(cells))
    scene.log_cache_stats("sweep")
    return SweepResult(grid, tuple(results))


# Trade-off search

def metric_groups(design: str) -> Tuple[Tuple[str, ...], ...]:
    """Metrics optimized jointly; D2 shares its areas between channels so all four go together"""
    param_axes(design)
    if design == "D2":
        return (("acc_h_mean", "acc_v_mean", "cross_hv_mean", "cross_vh_mean"),)
    return (("acc_h_mean", "cross_hv_mean"), ("acc_v_mean", "cross_vh_mean"))


@dataclass(frozen=True)
class TradeoffResult:
    design: str
    metrics: Tuple[str, ...]
    params: Tuple[float, ...]
    values: Dict[str, float] = field(hash=False)
    optima: Dict[str, float] = field(hash=False)
    relative_increase: Dict[str, float] = field(hash=False)
    level: float = 0.0
    step: int = 0


def tradeoff_select(params: Sequence[Tuple[float, ...]], surfaces: Mapping[str, Sequence[float]]):
    """Grow every metric's allowance in relative-increase units until the feasible sets meet

    A metric's relative increase at a cell is (value - min) / scale with scale
    = |min|, or the value range when the minimum is 0, or 1 for a constant
    metric. The allowances meet first at the cells minimizing the largest
    relative increase; ties go to the smallest sum, then to the smallest
    parameter tuple. Returns (index, level, step, relative increases).
    """
    names = tuple(surfaces)
    if not names:
        raise ContractError("no metric surfaces given")
    values = np.array([np.asarray(surfaces[name], dtype=float) for name in names])
    if values.ndim != 2 or values.shape[1] != len(params):
        raise ContractError("each surface needs one value per parameter tuple")
    if values.shape[1] == 0:
        raise ContractError("empty grid")
    valid = np.all(np.isfinite(values), axis=0)
    if not valid.any():
        raise ContractError(f"no cell has finite values for {', '.join(names)}")

    finite = values[:, valid]
    lowest, highest = finite.min(axis=1), finite.max(axis=1)
    span = highest - lowest
    scale = np.where(lowest != 0, np.abs(lowest), np.where(span > 0, span, 1.0))
    relative = np.where(valid, (np.where(valid, values, 0.0) - lowest[:, None]) / scale[:, None], np.inf)

    level = relative.max(axis=0)
    best = level[valid].min()
    candidates = [int(i) for i in np.flatnonzero(valid & (level == best))]
    index = min(candidates, key=lambda i: (float(relative[:, i].sum()), tuple(params[i])))
    # allowance steps taken before the sets met
    thresholds = np.unique(relative[:, valid])
    step = int(np.count_nonzero(thresholds < best))
    return index, float(best), step, {name: float(relative[m, index]) for m, name in enumerate(names)}


def tradeoff_optimize(result: SweepResult,
                      groups: Optional[Sequence[Sequence[str]]] = None) -> Tuple[TradeoffResult, ...]:
    """One trade-off parameter tuple per metric group of the swept design"""
    design = result.grid.design
    groups = groups or metric_groups(design)
    params = [cell.params for cell in result.cells]
    outcomes = []
    for group in groups:
        surfaces = {metric: [cell.value(metric) for cell in result.cells] for metric in group}
        index, level, step, relative = tradeoff_select(params, surfaces)
        values = {metric: surfaces[metric][index] for metric in group}
        optima = {metric: result.optimum(metric) for metric in group}
        debug_log("tradeoff", {"design": design, "metrics": list(group), "params": list(params[index]),
                               "level": level, "step": step})
        outcomes.append(TradeoffResult(design, tuple(group), tuple(params[index]), values, optima,
                                       relative, level, step))
    return tuple(outcomes)


def tradeoff_design(tradeoffs: Sequence[TradeoffResult], scene: Scene, anchors: Optional[DesignAnchors] = None,
                    d1_vertical_mode: str = "difference") -> PsogDesign:
    """Design built from trade-off parameters; per-channel parameters where the design allows"""
    design = tradeoffs[0].design
    horizontal = DesignParams.from_values(design, tradeoffs[0].params)
    if len(tradeoffs) == 1:
        return build_design(design, horizontal, scene.model, anchors, d1_vertical_mode)
    vertical = DesignParams.from_values(design, tradeoffs[1].params)
    return compose_design(design, horizontal, vertical, scene.model, anchors, d1_vertical_mode)


# Sensor shifts

COMBINATIONS = ("H-H", "V-H", "H-V", "V-V")


def camera_shift(shift_axis: str, shift_mm: float) -> Tuple[float, float]:
    """Camera displacement on image axes for a shift away from the nasal side (H) or upward (V)"""
    if shift_axis == "H":
        return -shift_mm, 0.0
    return 0.0, -shift_mm


@dataclass(frozen=True)
class ShiftExperimentConfig:
    """Shift and eye-position grids; combinations are labelled <eye axis>-<shift axis>"""
    shift_values: Tuple[float, ...] = _grid(-2.0, 2.0, 0.5)
    eye_positions: Tuple[float, ...] = _grid(-10.0, 10.0, 0.5)
    combinations: Tuple[str, ...] = COMBINATIONS

    def __post_init__(self):
        object.__setattr__(self, "shift_values", tuple(float(s) for s in self.shift_values))
        object.__setattr__(self, "eye_positions", tuple(float(p) for p in self.eye_positions))
        object.__setattr__(self, "combinations", tuple(self.combinations))
        if 0.0 not in self.shift_values:
            raise ConfigurationError("zero shift is required as the baseline", key="experiment.shift.shift_values")
        if len(set(self.shift_values)) != len(self.shift_values):
            raise ConfigurationError("duplicate shift values", key="experiment.shift.shift_values")
        if not self.eye_positions or any(abs(p) > 45.0 for p in self.eye_positions):
            raise ConfigurationError("must be non-empty and within [-45, 45] degrees",
                                     key="experiment.shift.eye_positions")
        if len(set(self.eye_positions)) != len(self.eye_positions):
            raise ConfigurationError("duplicate eye positions", key="experiment.shift.eye_positions")
        for combination in self.combinations:
            if combination not in COMBINATIONS:
                raise ConfigurationError(f"unknown combination {combination!r}", key="experiment.shift.combinations")


@dataclass(frozen=True, eq=False)
class ShiftCurveCluster:
    """Estimated-position curves of one combination, one per shift, with their MAE to zero shift"""
    combination: str
    eye_positions: Tuple[float, ...]
    shift_values: Tuple[float, ...]
    estimates: Dict[float, np.ndarray]
    mae: Dict[float, float]

    def curve(self, shift: float) -> Dict[float, float]:
        return dict(zip(self.eye_positions, (float(x) for x in self.estimates[shift])))


def _shift_unit(index: int, combination: str, shift: float, design: PsogDesign, calibration: CalibrationModel,
                positions: Tuple[float, ...], scene: Scene, seed: int) -> np.ndarray:
    start = time.time()
    eye_axis, shift_axis = combination.split("-")
    shifted = scene.with_shift(*camera_shift(shift_axis, shift))
    if eye_axis == "H":
        keys = [quantize_state(p, 0.0, CALIBRATION_PUPIL_MM) for p in positions]
    else:
        keys = [quantize_state(0.0, p, CALIBRATION_PUPIL_MM) for p in positions]
    values = np.array([shifted.sensor_values_for_key(design, key) for key in keys])
    rng = unit_rng(seed, index) if scene.sensor.effective_noise > 0 else None
    h_raw, v_raw = design_raw_output(design, scene.sensor.measure(values, rng))
    yaw, pitch = apply_calibration(calibration, h_raw, v_raw)
    debug_timing("shift_unit", (time.time() - start) * 1000, combination=combination, shift=shift)
    return np.asarray(yaw if eye_axis == "H" else pitch, dtype=float)


def run_shift_experiment(design: PsogDesign, config: ShiftExperimentConfig, scene: Scene,
                         calibration: Optional[CalibrationModel] = None, seed: int = 0,
                         workers: int = 1) -> Tuple[ShiftCurveCluster, ...]:
    """Curve clusters for every combination; calibration stays at zero shift"""
    if scene.camera.shift_x != 0.0 or scene.camera.shift_y != 0.0:
        raise ContractError("shift experiments start from the calibration position (zero shift)")
    calibration = calibration or calibrate_design(design, scene)
    units = [(combination, shift) for combination in config.combinations for shift in config.shift_values]
    curves = Parallel(n_jobs=workers, prefer="threads")(
        delayed(_shift_unit)(index, combination, shift, design, calibration, config.eye_positions, scene, seed)
        for index, (combination, shift) in enumerate(units))

    clusters = []
    for combination in config.combinations:
        estimates = {shift: curve for (c, shift), curve in zip(units, curves) if c == combination}
        baseline = estimates[0.0]
        mae = {shift: mae_between_curves(estimates[shift], baseline) for shift in config.shift_values}
        debug_log("shift_cluster", {"combination": combination, "mae": mae})
        clusters.append(ShiftCurveCluster(combination, config.eye_positions, config.shift_values, estimates, mae))
    scene.log_cache_stats("shift")
    return tuple(clusters)
