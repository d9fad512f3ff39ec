"""
Per-axis quadratic calibration

Raw de-matrixed outputs are mapped to degrees by a quadratic in the raw value,
one per axis. The fit is done on centered and scaled abscissae (raw PSOG
differentials can be O(1e-3)) and the raw-space coefficients are derived from
the normalized ones.
"""

import time
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .debug_logger import debug_log, debug_timing
from .designs import PsogDesign
from .errors import ContractError, FitError
from .eye_render import EyeState
from .scene import Scene

CALIBRATION_POSITIONS = (-10.0, 0.0, 10.0)
CALIBRATION_PUPIL_MM = 4.0


@dataclass(frozen=True)
class AxisFit:
    """Quadratic y = q2*z^2 + q1*z + q0 with z = (raw - center) / scale"""
    q2: float
    q1: float
    q0: float
    center: float = 0.0
    scale: float = 1.0
    residual: float = 0.0

    @classmethod
    def from_coefficients(cls, a: float, b: float, c: float) -> "AxisFit":
        return cls(float(a), float(b), float(c))

    @property
    def a(self) -> float:
        return self.q2 / self.scale ** 2

    @property
    def b(self) -> float:
        return self.q1 / self.scale - 2.0 * self.q2 * self.center / self.scale ** 2

    @property
    def c(self) -> float:
        z0 = -self.center / self.scale
        return self.q2 * z0 * z0 + self.q1 * z0 + self.q0

    def __call__(self, raw):
        z = (np.asarray(raw, dtype=float) - self.center) / self.scale
        value = (self.q2 * z + self.q1) * z + self.q0
        return float(value) if value.ndim == 0 else value

    def to_dict(self) -> Dict[str, float]:
        return {"a": self.a, "b": self.b, "c": self.c, "residual": self.residual,
                "normalized": [self.q2, self.q1, self.q0], "center": self.center, "scale": self.scale}

    @classmethod
    def from_dict(cls, record: Dict[str, Any]) -> "AxisFit":
        if "normalized" in record:
            q2, q1, q0 = record["normalized"]
            return cls(float(q2), float(q1), float(q0), float(record["center"]), float(record["scale"]),
                       float(record.get("residual", 0.0)))
        fit = cls.from_coefficients(record["a"], record["b"], record["c"])
        return cls(fit.q2, fit.q1, fit.q0, residual=float(record.get("residual", 0.0)))


def fit_axis(points: Iterable[Tuple[float, float]], axis: str = "h") -> AxisFit:
    """Least-squares quadratic through (raw, degrees) points

    With exactly three distinct abscissae the quadratic interpolates them.
    """
    data = np.asarray(list(points), dtype=float)
    if data.ndim != 2 or data.shape[0] < 3 or data.shape[1] != 2:
        raise FitError("at least 3 (raw, degrees) points are required", axis)
    raw, degrees = data[:, 0], data[:, 1]
    if not np.all(np.isfinite(data)):
        raise FitError("non-finite calibration point", axis)
    if np.unique(raw).size < 3:
        raise FitError(f"raw outputs {raw.tolist()} have fewer than 3 distinct values", axis)

    center = float(np.mean(raw))
    scale = float(np.max(raw) - np.min(raw)) / 2.0
    z = (raw - center) / scale
    vander = np.vander(z, 3)
    try:
        # normal equations, LU with partial pivoting
        coeffs = np.linalg.solve(vander.T @ vander, vander.T @ degrees)
    except np.linalg.LinAlgError as e:
        raise FitError(f"rank-deficient normal system ({e})", axis)
    if not np.all(np.isfinite(coeffs)):
        raise FitError("non-finite coefficients", axis)

    residual = float(np.sqrt(np.mean((vander @ coeffs - degrees) ** 2)))
    return AxisFit(float(coeffs[0]), float(coeffs[1]), float(coeffs[2]), center, scale, residual)


@dataclass(frozen=True)
class CalibrationModel:
    """Horizontal and vertical quadratic maps from raw output to degrees"""
    horizontal: AxisFit
    vertical: AxisFit

    @classmethod
    def from_coefficients(cls, a_h: float, b_h: float, c_h: float,
                          a_v: float, b_v: float, c_v: float) -> "CalibrationModel":
        return cls(AxisFit.from_coefficients(a_h, b_h, c_h), AxisFit.from_coefficients(a_v, b_v, c_v))

    a_h = property(lambda self: self.horizontal.a)
    b_h = property(lambda self: self.horizontal.b)
    c_h = property(lambda self: self.horizontal.c)
    a_v = property(lambda self: self.vertical.a)
    b_v = property(lambda self: self.vertical.b)
    c_v = property(lambda self: self.vertical.c)
    fit_residual_h = property(lambda self: self.horizontal.residual)
    fit_residual_v = property(lambda self: self.vertical.residual)

    def to_dict(self) -> Dict[str, Any]:
        return {"horizontal": self.horizontal.to_dict(), "vertical": self.vertical.to_dict()}

    @classmethod
    def from_dict(cls, record: Dict[str, Any]) -> "CalibrationModel":
        return cls(AxisFit.from_dict(record["horizontal"]), AxisFit.from_dict(record["vertical"]))


def apply_calibration(model: CalibrationModel, h_raw, v_raw):
    """(yaw_est, pitch_est) in degrees"""
    return model.horizontal(h_raw), model.vertical(v_raw)


def calibration_points(design: PsogDesign, scene: Scene,
                       positions: Sequence[float] = CALIBRATION_POSITIONS
                       ) -> Tuple[List[Tuple[float, float]], List[Tuple[float, float]]]:
    """Raw outputs at the calibration poses: yaw sweep at pitch 0, pitch sweep at yaw 0"""
    if scene.camera.shift_x != 0.0 or scene.camera.shift_y != 0.0:
        raise ContractError("calibration requires the camera at zero shift")
    h_points = []
    for yaw in positions:
        h_raw, _ = scene.raw_outputs(design, EyeState(yaw, 0.0, CALIBRATION_PUPIL_MM))
        h_points.append((h_raw, float(yaw)))
    v_points = []
    for pitch in positions:
        _, v_raw = scene.raw_outputs(design, EyeState(0.0, pitch, CALIBRATION_PUPIL_MM))
        v_points.append((v_raw, float(pitch)))
    return h_points, v_points


def calibrate_design(design: PsogDesign, scene: Scene,
                     positions: Sequence[float] = CALIBRATION_POSITIONS) -> CalibrationModel:
    """Fit both axes of a design from renders at the calibration poses"""
    start = time.time()
    h_points, v_points = calibration_points(design, scene, positions)
    model = CalibrationModel(fit_axis(h_points, "horizontal"), fit_axis(v_points, "vertical"))
    debug_timing("calibration", (time.time() - start) * 1000, design=design.name)
    debug_log("calibration_fit", {"design": design.name,
                                  "horizontal": model.horizontal.to_dict(),
                                  "vertical": model.vertical.to_dict()})
    return model
