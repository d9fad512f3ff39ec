"""
Fixation-gated evaluation metrics

Accuracy is the mean absolute error over a fixation, crosstalk the absolute
ratio between stray movement in one channel and the driving movement in the
other, and the curve MAE compares position curves across sensor shifts.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .debug_logger import debug_warning
from .errors import ContractError

MIN_FIXATION_SAMPLES = 10
DEFAULT_SETTLE_MS = 80.0
DEFAULT_TAIL_MS = 20.0
LABELS = ("H", "V", "center")


@dataclass(frozen=True)
class Fixation:
    """Sample interval [start, end) of one fixation"""
    start: int
    end: int
    label: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise ContractError(f"fixation label must be one of {LABELS}, got {self.label!r}")
        if self.end - self.start < MIN_FIXATION_SAMPLES:
            raise ContractError(f"fixation [{self.start}, {self.end}) is shorter than {MIN_FIXATION_SAMPLES} samples")

    @property
    def samples(self) -> slice:
        return slice(self.start, self.end)


def _frozen(values) -> np.ndarray:
    data = np.array(values, dtype=float)
    data.flags.writeable = False
    return data


@dataclass(frozen=True, eq=False)
class GazeSignal:
    """Uniformly sampled horizontal/vertical gaze in degrees with fixation labels"""
    sample_rate: float
    t: np.ndarray
    h: np.ndarray
    v: np.ndarray
    fixations: Tuple[Fixation, ...] = ()
    dwells: Optional[Tuple[Tuple[int, int], ...]] = None

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ContractError("sample_rate must be > 0")
        t, h, v = _frozen(self.t), _frozen(self.h), _frozen(self.v)
        if not (t.ndim == h.ndim == v.ndim == 1) or not (len(t) == len(h) == len(v)):
            raise ContractError("t, h and v must be 1-D series of equal length")
        if len(t) > 1:
            steps = np.diff(t)
            if np.any(steps <= 0) or not np.allclose(steps, 1.0 / self.sample_rate, rtol=1e-6, atol=1e-12):
                raise ContractError("timestamps must increase at 1/sample_rate spacing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "v", v)

        fixations = tuple(sorted(self.fixations, key=lambda f: f.start))
        previous_end = 0
        for fixation in fixations:
            if fixation.start < previous_end or fixation.end > len(t) or fixation.start < 0:
                raise ContractError(f"fixation [{fixation.start}, {fixation.end}) overlaps another or is out of bounds")
            previous_end = fixation.end
        object.__setattr__(self, "fixations", fixations)
        if self.dwells is not None:
            object.__setattr__(self, "dwells", tuple((int(s), int(e)) for s, e in self.dwells))

    @classmethod
    def from_samples(cls, sample_rate: float, h, v, fixations: Sequence[Fixation] = (),
                     dwells=None) -> "GazeSignal":
        n = len(h)
        return cls(sample_rate, np.arange(n) / float(sample_rate), h, v, tuple(fixations), dwells)

    def __len__(self) -> int:
        return len(self.t)

    def with_fixations(self, fixations: Sequence[Fixation]) -> "GazeSignal":
        return replace(self, fixations=tuple(fixations))

    def dwell_intervals(self) -> Tuple[Tuple[int, int], ...]:
        """Explicit dwells, or the runs of constant (h, v) when none were recorded"""
        if self.dwells is not None:
            return self.dwells
        n = len(self)
        if n == 0:
            return ()
        changes = np.flatnonzero((np.diff(self.h) != 0) | (np.diff(self.v) != 0)) + 1
        bounds = np.concatenate(([0], changes, [n]))
        return tuple((int(s), int(e)) for s, e in zip(bounds[:-1], bounds[1:]))


def dwell_label(h: float, v: float) -> str:
    if h == 0 and v == 0:
        return "center"
    return "H" if abs(h) >= abs(v) else "V"


def segment_fixations(gt: GazeSignal, settle_ms: float = DEFAULT_SETTLE_MS,
                      tail_ms: float = DEFAULT_TAIL_MS) -> Tuple[Fixation, ...]:
    """One fixation per dwell, trimmed by the settle and tail exclusions"""
    settle = int(round(settle_ms * gt.sample_rate / 1000.0))
    tail = int(round(tail_ms * gt.sample_rate / 1000.0))
    fixations = []
    for start, end in gt.dwell_intervals():
        first, last = start + settle, end - tail
        if last - first < MIN_FIXATION_SAMPLES:
            debug_warning("dwell_skipped", "dwell shorter than the settle and tail exclusions",
                          {"start": start, "end": end, "settle": settle, "tail": tail})
            continue
        # the dwell target is its final sample (ramps precede it)
        label = dwell_label(gt.h[end - 1], gt.v[end - 1])
        fixations.append(Fixation(first, last, label))
    return tuple(fixations)


def _check_aligned(sim: GazeSignal, gt: GazeSignal):
    if len(sim) != len(gt):
        raise ContractError(f"simulated signal has {len(sim)} samples, ground truth has {len(gt)}")


def compute_accuracy(sim: GazeSignal, gt: GazeSignal) -> Tuple[np.ndarray, np.ndarray]:
    """Per-fixation mean absolute error: (acc_h over H fixations, acc_v over V fixations)"""
    _check_aligned(sim, gt)
    acc_h = [np.mean(np.abs(sim.h[f.samples] - gt.h[f.samples])) for f in gt.fixations if f.label == "H"]
    acc_v = [np.mean(np.abs(sim.v[f.samples] - gt.v[f.samples])) for f in gt.fixations if f.label == "V"]
    return np.array(acc_h, dtype=float), np.array(acc_v, dtype=float)


def _crosstalk(stray_sim: np.ndarray, stray_gt: np.ndarray, driving_gt: np.ndarray,
               fixation: Fixation, name: str) -> Optional[float]:
    denominator = abs(float(np.sum(driving_gt[fixation.samples])))
    if denominator == 0.0:
        debug_warning("crosstalk_skipped", f"{name}: driving-axis sum is zero",
                      {"start": fixation.start, "end": fixation.end})
        return None
    numerator = float(np.sum(stray_sim[fixation.samples])) - float(np.sum(stray_gt[fixation.samples]))
    return abs(numerator) / denominator


def compute_crosstalk(sim: GazeSignal, gt: GazeSignal) -> Tuple[np.ndarray, np.ndarray]:
    """Per-fixation crosstalk fractions: (cross_hv over V fixations, cross_vh over H fixations)"""
    _check_aligned(sim, gt)
    cross_hv, cross_vh = [], []
    for fixation in gt.fixations:
        if fixation.label == "V":
            value = _crosstalk(sim.h, gt.h, gt.v, fixation, "cross_hv")
            if value is not None:
                cross_hv.append(value)
        elif fixation.label == "H":
            value = _crosstalk(sim.v, gt.v, gt.h, fixation, "cross_vh")
            if value is not None:
                cross_vh.append(value)
    return np.array(cross_hv, dtype=float), np.array(cross_vh, dtype=float)


METRIC_NAMES = ("acc_h", "acc_v", "cross_hv", "cross_vh")
SUMMARY_COLUMNS = tuple(f"{name}_{stat}" for name in METRIC_NAMES for stat in ("mean", "std"))


def _summary(values: np.ndarray) -> Tuple[float, float]:
    if values.size == 0:
        return float("nan"), float("nan")
    return float(np.mean(values)), float(np.std(values))


@dataclass(frozen=True, eq=False)
class MetricReport:
    """Accuracy and crosstalk per fixation with their means and population stds"""
    acc_h: np.ndarray
    acc_v: np.ndarray
    cross_hv: np.ndarray
    cross_vh: np.ndarray
    summary: Dict[str, float] = field(init=False)

    def __post_init__(self):
        summary = {}
        for name in METRIC_NAMES:
            values = _frozen(getattr(self, name))
            object.__setattr__(self, name, values)
            summary[f"{name}_mean"], summary[f"{name}_std"] = _summary(values)
        object.__setattr__(self, "summary", summary)

    def __getattr__(self, item):
        # acc_h_mean, cross_vh_std, ...
        summary = self.__dict__.get("summary")
        if summary is not None and item in summary:
            return summary[item]
        raise AttributeError(item)

    def row(self) -> Dict[str, float]:
        return {column: self.summary[column] for column in SUMMARY_COLUMNS}


def build_metric_report(sim: GazeSignal, gt: GazeSignal) -> MetricReport:
    acc_h, acc_v = compute_accuracy(sim, gt)
    cross_hv, cross_vh = compute_crosstalk(sim, gt)
    return MetricReport(acc_h, acc_v, cross_hv, cross_vh)


def mae_between_curves(curve_i, curve_0) -> float:
    """Mean absolute difference between two curves on the same position grid

    Curves are mappings from ground-truth position to estimate, or plain
    sequences sampled on the same grid.
    """
    if isinstance(curve_i, Mapping) or isinstance(curve_0, Mapping):
        if not (isinstance(curve_i, Mapping) and isinstance(curve_0, Mapping)):
            raise ContractError("both curves must be position maps")
        if set(curve_i) != set(curve_0):
            raise ContractError("curves are sampled on different position grids")
        keys = sorted(curve_0)
        y_i = np.array([curve_i[k] for k in keys], dtype=float)
        y_0 = np.array([curve_0[k] for k in keys], dtype=float)
    else:
        y_i, y_0 = np.asarray(curve_i, dtype=float), np.asarray(curve_0, dtype=float)
        if y_i.shape != y_0.shape:
            raise ContractError(f"curve lengths differ: {y_i.shape} vs {y_0.shape}")
    if y_0.size == 0:
        raise ContractError("curves are empty")
    return float(np.mean(np.abs(y_i - y_0)))
