"""
Result files

Tables are built as pandas frames and written as CSV with 9 significant
digits and line-feed newlines. Heatmaps are hand-assembled SVG (one rect per
grid cell with a tooltip); curve clusters are drawn with matplotlib's SVG
backend. Every written file is listed with its SHA-256 in manifest.json.
"""

import hashlib
import io
import json
import math
import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, List, Optional, Sequence, Tuple, Union

import matplotlib
import numpy as np
import pandas as pd
from matplotlib.figure import Figure

from . import __version__
from .calibration import CalibrationModel
from .debug_logger import debug_error, debug_log
from .designs import PsogDesign, param_axes
from .errors import ConfigurationError, ContractError, ParseError, PsogError
from .experiments import ShiftCurveCluster, SweepResult, TradeoffResult
from .metrics import GazeSignal, METRIC_NAMES, MetricReport, SUMMARY_COLUMNS
from .settings import RunConfig, config_hash

FLOAT_FORMAT = "%.9g"
HEATMAP_COLORMAP = "inferno"
NONFINITE_COLOR = "#00b3b3"
SVG_NS = "http://www.w3.org/2000/svg"
TRADEOFF_RULE = ("allowances grow in relative-increase units (value - min) / scale, scale = |min| "
                 "or the value range when min is 0; the first cells admitted by every metric win, "
                 "ties broken by the smallest sum of relative increases, then by parameters")

Content = Union[str, bytes]


def csv_text(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n", na_rep="nan")


def format_value(value: float) -> str:
    return FLOAT_FORMAT % value if math.isfinite(value) else str(value)


@dataclass
class ResultsBundle:
    """In-memory result files of one run, written together with their manifest"""
    config: RunConfig
    files: Dict[str, Content] = field(default_factory=dict)
    started_at: Optional[str] = None

    def __post_init__(self):
        if self.config.output.record_timestamps and self.started_at is None:
            self.started_at = _now()

    def add(self, name: str, content: Content):
        if name == "manifest.json" or os.path.basename(name) != name:
            raise ContractError(f"invalid result file name {name!r}")
        self.files[name] = content

    def add_csv(self, name: str, frame: pd.DataFrame):
        self.add(name, csv_text(frame))

    def wants(self, fmt: str) -> bool:
        return fmt in self.config.output.formats


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _as_bytes(content: Content) -> bytes:
    return content.encode("utf-8") if isinstance(content, str) else content


def build_manifest(bundle: ResultsBundle) -> Dict:
    manifest = {
        "tool": "psogsim",
        "version": __version__,
        "config_hash": config_hash(bundle.config),
        "seed": bundle.config.output.seed,
        "mode": bundle.config.experiment.mode,
        "design": bundle.config.design.name,
        "files": {name: hashlib.sha256(_as_bytes(content)).hexdigest()
                  for name, content in sorted(bundle.files.items())},
    }
    if bundle.config.experiment.mode == "tradeoff":
        manifest["tradeoff_rule"] = TRADEOFF_RULE
    if bundle.config.output.record_timestamps:
        manifest["timestamps"] = {"started": bundle.started_at, "finished": _now()}
    return manifest


def write_results(bundle: ResultsBundle, directory: str) -> List[str]:
    """Write every bundle file plus manifest.json; returns the written paths"""
    paths = []
    try:
        os.makedirs(directory, exist_ok=True)
        for name, content in sorted(bundle.files.items()):
            path = os.path.join(directory, name)
            with open(path, "wb") as f:
                f.write(_as_bytes(content))
            paths.append(path)
        path = os.path.join(directory, "manifest.json")
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(json.dumps(build_manifest(bundle), indent=2, sort_keys=True) + "\n")
        paths.append(path)
    except OSError as e:
        debug_error("results_write_failed", str(e), {"path": e.filename or directory})
        raise PsogError(f"cannot write results to {e.filename or directory}: {e.strerror}")
    debug_log("results_written", {"directory": directory, "files": [os.path.basename(p) for p in paths]})
    return paths


# Tables

def signal_frame(gt: GazeSignal, sim: GazeSignal, pupil: Optional[np.ndarray] = None) -> pd.DataFrame:
    frame = pd.DataFrame({"t": gt.t, "gt_h": gt.h, "gt_v": gt.v, "est_h": sim.h, "est_v": sim.v})
    if pupil is not None:
        frame["pupil_diameter"] = pupil
    return frame


def fixations_frame(gt: GazeSignal) -> pd.DataFrame:
    return pd.DataFrame({"start": [f.start for f in gt.fixations],
                         "end": [f.end for f in gt.fixations],
                         "label": [f.label for f in gt.fixations]},
                        columns=["start", "end", "label"])


def metrics_frame(design: PsogDesign, params: Dict[str, float], report: MetricReport) -> pd.DataFrame:
    row = {"design": design.name}
    row.update(params)
    row.update(report.row())
    row.update({f"n_{name}": int(getattr(report, name).size) for name in METRIC_NAMES})
    return pd.DataFrame([row])


def calibration_record(design: PsogDesign, params: Dict[str, float], calibration: CalibrationModel,
                       vertical_params: Optional[Dict[str, float]] = None) -> str:
    record = {"design": design.name, "params": params, "calibration": calibration.to_dict()}
    if vertical_params is not None:
        record["vertical_params"] = vertical_params
    return json.dumps(record, indent=2, sort_keys=True) + "\n"


def sweep_frame(result: SweepResult) -> pd.DataFrame:
    names = list(result.grid.names)
    rows = []
    for cell in result.cells:
        row = dict(zip(names, cell.params))
        row.update({column: cell.value(column) for column in SUMMARY_COLUMNS})
        rows.append(row)
    return pd.DataFrame(rows, columns=names + list(SUMMARY_COLUMNS))


def sweep_errors_frame(result: SweepResult) -> pd.DataFrame:
    names = list(result.grid.names)
    rows = [dict(zip(["index"] + names + ["error"], [cell.index, *cell.params, cell.error]))
            for cell in result.failures]
    return pd.DataFrame(rows, columns=["index"] + names + ["error"])


def tradeoff_frame(tradeoffs: Sequence[TradeoffResult], names: Sequence[str]) -> pd.DataFrame:
    rows = []
    for outcome in tradeoffs:
        row = {"design": outcome.design, "metrics": "+".join(outcome.metrics)}
        row.update(dict(zip(names, outcome.params)))
        for metric in outcome.metrics:
            row[metric] = outcome.values[metric]
            row[f"{metric}_optimum"] = outcome.optima[metric]
            row[f"{metric}_relative_increase"] = outcome.relative_increase[metric]
        row["level"] = outcome.level
        row["step"] = outcome.step
        rows.append(row)
    return pd.DataFrame(rows)


def shift_curves_frame(clusters: Sequence[ShiftCurveCluster]) -> pd.DataFrame:
    rows = []
    for cluster in clusters:
        for shift in cluster.shift_values:
            for position, estimate in zip(cluster.eye_positions, cluster.estimates[shift]):
                rows.append((cluster.combination, shift, position, float(estimate)))
    return pd.DataFrame(rows, columns=["combination", "shift", "gt_position", "estimate"])


def shift_summary_frame(clusters: Sequence[ShiftCurveCluster]) -> pd.DataFrame:
    rows = [(cluster.combination, shift, cluster.mae[shift])
            for cluster in clusters for shift in cluster.shift_values]
    return pd.DataFrame(rows, columns=["combination", "shift", "mae"])


def read_csv(directory: str, name: str) -> pd.DataFrame:
    path = os.path.join(directory, name)
    try:
        return pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as e:
        raise PsogError(f"cannot read {path}: {e}")


def tradeoffs_from_frame(frame: pd.DataFrame, design: str) -> Tuple[TradeoffResult, ...]:
    """Trade-off outcomes back from a tradeoff.csv table, in row order"""
    names = param_axes(design)
    missing = [column for column in ("design", "metrics", *names, "level", "step") if column not in frame.columns]
    if missing:
        raise ParseError(f"tradeoff table lacks column(s) {', '.join(missing)}")
    if frame.empty:
        raise ParseError("tradeoff table has no rows")
    outcomes = []
    for record in frame.to_dict("records"):
        if record["design"] != design:
            raise ConfigurationError(f"tradeoff table was computed for {record['design']}", key="design.name")
        metrics = tuple(str(record["metrics"]).split("+"))
        try:
            values = {metric: float(record[metric]) for metric in metrics}
            optima = {metric: float(record[f"{metric}_optimum"]) for metric in metrics}
            relative = {metric: float(record[f"{metric}_relative_increase"]) for metric in metrics}
        except KeyError as e:
            raise ParseError(f"tradeoff table lacks column {e}")
        outcomes.append(TradeoffResult(design, metrics, tuple(float(record[name]) for name in names),
                                       values, optima, relative, float(record["level"]), int(record["step"])))
    return tuple(outcomes)


def sensor_outputs_frame(design: PsogDesign, values: Sequence[float]) -> pd.DataFrame:
    """One row per detection area of a design with its binned value"""
    rows = [(index, area.shape, area.center_x, area.center_y, float(value))
            for index, (area, value) in enumerate(zip(design.areas, values))]
    return pd.DataFrame(rows, columns=["area", "shape", "center_x", "center_y", "value"])


def design_outputs_frame(design: PsogDesign, h_raw: float, v_raw: float,
                         estimate: Optional[Tuple[float, float]] = None) -> pd.DataFrame:
    yaw, pitch = estimate if estimate is not None else (float("nan"), float("nan"))
    return pd.DataFrame([(design.name, float(h_raw), float(v_raw), float(yaw), float(pitch))],
                        columns=["design", "h_raw", "v_raw", "yaw_est", "pitch_est"])


# Heatmaps

def _luminance_color(fraction: float) -> str:
    r, g, b, _ = matplotlib.colormaps[HEATMAP_COLORMAP](fraction)
    return "#{:02x}{:02x}{:02x}".format(int(round(r * 255)), int(round(g * 255)), int(round(b * 255)))


def emit_heatmap_svg(surface, x_values: Sequence[float], y_values: Sequence[float],
                     x_label: str, y_label: str, title: str = "") -> str:
    """Self-contained SVG heatmap; surface[i, j] is the value at (x_values[i], y_values[j])

    Brighter cells are larger values. Non-finite cells keep their place in a
    sentinel color.
    """
    values = np.asarray(surface, dtype=float)
    if values.shape != (len(x_values), len(y_values)):
        raise ContractError(f"surface shape {values.shape} does not match axes "
                            f"({len(x_values)}, {len(y_values)})")
    finite = values[np.isfinite(values)]
    low = float(finite.min()) if finite.size else float("nan")
    high = float(finite.max()) if finite.size else float("nan")

    cell, left, top, bottom = 24, 80, 40, 60
    legend_w = 110
    width = left + cell * len(x_values) + legend_w
    height = top + cell * len(y_values) + bottom

    svg = ET.Element("svg", {"xmlns": SVG_NS, "version": "1.1", "width": str(width), "height": str(height),
                             "viewBox": f"0 0 {width} {height}", "font-family": "sans-serif", "font-size": "10"})
    ET.SubElement(svg, "title").text = title or f"{x_label} x {y_label}"
    if title:
        ET.SubElement(svg, "text", {"x": str(left), "y": "20", "font-size": "13"}).text = title

    grid = ET.SubElement(svg, "g", {"class": "cells"})
    for i, x in enumerate(x_values):
        for j, y in enumerate(y_values):
            value = values[i, j]
            if math.isfinite(value):
                fraction = 0.0 if high == low else (value - low) / (high - low)
                color, css = _luminance_color(fraction), "cell"
            else:
                color, css = NONFINITE_COLOR, "cell nonfinite"
            # y grows upward
            rect = ET.SubElement(grid, "rect", {
                "x": str(left + i * cell), "y": str(top + (len(y_values) - 1 - j) * cell),
                "width": str(cell), "height": str(cell), "fill": color, "class": css})
            ET.SubElement(rect, "title").text = (f"{x_label}={format_value(x)}, {y_label}={format_value(y)}: "
                                                 f"{format_value(value)}")

    axis_y = top + cell * len(y_values)
    for i, x in enumerate(x_values):
        ET.SubElement(svg, "text", {"x": str(left + i * cell + cell / 2), "y": str(axis_y + 12),
                                    "text-anchor": "middle"}).text = f"{x:g}"
    for j, y in enumerate(y_values):
        ET.SubElement(svg, "text", {"x": str(left - 4), "y": str(top + (len(y_values) - 1 - j) * cell + cell / 2 + 3),
                                    "text-anchor": "end"}).text = f"{y:g}"
    ET.SubElement(svg, "text", {"x": str(left + cell * len(x_values) / 2), "y": str(axis_y + 30),
                                "text-anchor": "middle"}).text = x_label
    ET.SubElement(svg, "text", {"x": "12", "y": str(top + cell * len(y_values) / 2),
                                "text-anchor": "middle",
                                "transform": f"rotate(-90 12 {top + cell * len(y_values) / 2})"}).text = y_label

    legend_x = left + cell * len(x_values) + 20
    defs = ET.SubElement(svg, "defs")
    gradient = ET.SubElement(defs, "linearGradient", {"id": "ramp", "x1": "0", "y1": "1", "x2": "0", "y2": "0"})
    for k in range(11):
        ET.SubElement(gradient, "stop", {"offset": f"{k / 10:g}", "stop-color": _luminance_color(k / 10)})
    legend = ET.SubElement(svg, "g", {"class": "legend"})
    ET.SubElement(legend, "rect", {"x": str(legend_x), "y": str(top), "width": "14", "height": "100",
                                   "fill": "url(#ramp)"})
    ET.SubElement(legend, "text", {"x": str(legend_x + 18), "y": str(top + 8), "class": "legend-max"}).text = \
        f"max {format_value(high)}"
    ET.SubElement(legend, "text", {"x": str(legend_x + 18), "y": str(top + 100), "class": "legend-min"}).text = \
        f"min {format_value(low)}"
    ET.SubElement(legend, "rect", {"x": str(legend_x), "y": str(top + 112), "width": "14", "height": "10",
                                   "fill": NONFINITE_COLOR})
    ET.SubElement(legend, "text", {"x": str(legend_x + 18), "y": str(top + 121)}).text = "non-finite"

    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(svg, encoding="unicode") + "\n"


def heatmap_slices(frame: pd.DataFrame, names: Sequence[str], metric: str) -> Tuple[np.ndarray, list, list, str, str, str]:
    """2-D slice of a sweep table for one metric

    A 1-D sweep becomes a single-row map; for 3-D sweeps the third axis is
    held at the value of the metric's grid optimum.
    """
    table = frame.copy()
    note = ""
    if len(names) == 3:
        values = table[metric].to_numpy(dtype=float)
        if np.isfinite(values).any():
            best = table.iloc[int(np.nanargmin(values))][names[2]]
        else:
            best = table[names[2]].min()
        table = table[table[names[2]] == best]
        note = f" at {names[2]}={best:g}"
    x_name = names[0]
    y_name = names[1] if len(names) > 1 else None
    x_values = sorted(table[x_name].unique())
    y_values = sorted(table[y_name].unique()) if y_name else [0.0]
    surface = np.full((len(x_values), len(y_values)), np.nan)
    x_index = {x: i for i, x in enumerate(x_values)}
    y_index = {y: j for j, y in enumerate(y_values)}
    for _, row in table.iterrows():
        j = y_index[row[y_name]] if y_name else 0
        surface[x_index[row[x_name]], j] = row[metric]
    return surface, x_values, y_values, x_name, y_name or "-", note


def sweep_heatmaps(frame: pd.DataFrame, names: Sequence[str], design: str) -> Dict[str, str]:
    files = {}
    for metric in SUMMARY_COLUMNS:
        if not metric.endswith("_mean"):
            continue
        surface, xs, ys, x_name, y_name, note = heatmap_slices(frame, names, metric)
        files[f"heatmap_{metric}.svg"] = emit_heatmap_svg(surface, xs, ys, x_name, y_name,
                                                          f"{design} {metric}{note}")
    return files


# Curve clusters

def emit_curves_svg(combination: str, curves: Dict[float, Tuple[Sequence[float], Sequence[float]]]) -> str:
    """Estimated vs ground-truth position, one line per shift"""
    with matplotlib.rc_context({"svg.hashsalt": "psog", "svg.fonttype": "none"}):
        fig = Figure(figsize=(6, 4.5))
        ax = fig.add_subplot(1, 1, 1)
        shifts = sorted(curves)
        colors = matplotlib.colormaps["viridis"](np.linspace(0, 1, max(len(shifts), 2)))
        for color, shift in zip(colors, shifts):
            positions, estimates = curves[shift]
            ax.plot(positions, estimates, color=color, linewidth=2.0 if shift == 0 else 1.0,
                    label=f"{shift:+g} mm")
        ax.set_xlabel("ground-truth position (deg)")
        ax.set_ylabel("estimated position (deg)")
        ax.set_title(f"{combination} sensor shift")
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=7, ncol=2)
        buffer = io.StringIO()
        fig.savefig(buffer, format="svg", metadata={"Date": None})
    return buffer.getvalue()


def shift_svgs(curves: pd.DataFrame) -> Dict[str, str]:
    files = {}
    for combination, group in curves.groupby("combination", sort=False):
        per_shift = {float(shift): (part["gt_position"].to_numpy(), part["estimate"].to_numpy())
                     for shift, part in group.groupby("shift", sort=True)}
        files[f"shift_{combination}.svg"] = emit_curves_svg(combination, per_shift)
    return files


def add_to_manifest(directory: str, files: Dict[str, Content]) -> List[str]:
    """Write derived files next to an existing bundle and list them in its manifest"""
    manifest_path = os.path.join(directory, "manifest.json")
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except FileNotFoundError:
        manifest = {"tool": "psogsim", "version": __version__, "files": {}}
    except (OSError, json.JSONDecodeError) as e:
        raise PsogError(f"cannot read {manifest_path}: {e}")

    paths = []
    try:
        for name, content in sorted(files.items()):
            path = os.path.join(directory, name)
            with open(path, "wb") as f:
                f.write(_as_bytes(content))
            manifest["files"][name] = hashlib.sha256(_as_bytes(content)).hexdigest()
            paths.append(path)
        with open(manifest_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as e:
        raise PsogError(f"cannot write results to {e.filename or directory}: {e.strerror}")
    debug_log("report_written", {"directory": directory, "files": sorted(files)})
    return paths
