"""
PSOG designs D1-D4

Each design is a list of detection areas plus the signed coefficients that
de-matrix their outputs into a horizontal and a vertical channel. Parameter
positions (pos_x, pos_y) use the anatomical convention: pos_y positive is
upward and pos_x positive is away from the nasal side. Area centers are
stored on image axes (x toward nasal, y downward).
"""

from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, ContractError
from .eye_render import EyeModelConfig
from .sensing import DetectionArea

DESIGN_NAMES = ("D1", "D2", "D3", "D4")

PARAM_AXES: Dict[str, Tuple[str, ...]] = {
    "D1": ("length", "width"),
    "D2": ("length", "width", "angle"),
    "D3": ("diameter",),
    "D4": ("diameter", "pos_y", "pos_x"),
}

PARAM_RANGES: Dict[str, Tuple[float, float]] = {
    "length": (0.5, 12.0),
    "width": (0.5, 12.0),
    "diameter": (0.5, 12.0),
    "angle": (5.0, 45.0),
    "pos_x": (-2.0, 2.0),
    "pos_y": (-2.0, 2.0),
}

D1_VERTICAL_MODES = ("difference", "sum")

# Horizontal array PS1..PS9 followed by vertical array PS1..PS9
_D4_H = (1, 1, 0, 0, 0, 0, 0, -1, -1) + (0,) * 9
_D4_V = (0,) * 9 + (0, 1, 1, 0, 0, 0, -1, -1, 0)

_COEFFS = {
    "D1": ((1, -1, 0, 0), (0, 0, 1, -1)),
    "D2": ((1, -1), (1, 1)),
    "D3": ((1, -1, 0, 0), (0, 0, 1, 1)),
    "D4": (_D4_H, _D4_V),
}

# indices of the areas feeding the horizontal channel; the rest feed the vertical one
_HORIZONTAL_AREAS = {"D1": range(0, 2), "D2": range(0, 2), "D3": range(0, 2), "D4": range(0, 9)}


def param_axes(name: str) -> Tuple[str, ...]:
    """Canonical parameter order for grids, CSV columns and lexicographic ordering"""
    if name not in PARAM_AXES:
        raise ConfigurationError(f"unknown design {name!r}, expected one of {', '.join(DESIGN_NAMES)}", key="design.name")
    return PARAM_AXES[name]


def check_param_value(axis: str, value: float, key_prefix: str = "params"):
    low, high = PARAM_RANGES[axis]
    if not np.isfinite(value) or not low <= value <= high:
        unit = "degrees" if axis == "angle" else "mm"
        raise ConfigurationError(f"{value} outside [{low:g}, {high:g}] {unit}", key=f"{key_prefix}.{axis}")


@dataclass(frozen=True)
class DesignParams:
    """Sweep parameters of one design; only the fields of that design are set"""
    length: Optional[float] = None
    width: Optional[float] = None
    angle: Optional[float] = None
    diameter: Optional[float] = None
    pos_y: Optional[float] = None
    pos_x: Optional[float] = None

    @classmethod
    def from_mapping(cls, name: str, values: Mapping[str, float], key_prefix: str = "params") -> "DesignParams":
        axes = param_axes(name)
        for key in values:
            if key not in axes:
                raise ConfigurationError(f"not a parameter of design {name}", key=f"{key_prefix}.{key}")
        missing = [axis for axis in axes if axis not in values]
        if missing:
            raise ConfigurationError(f"design {name} requires {', '.join(axes)}", key=f"{key_prefix}.{missing[0]}")
        params = cls(**{axis: float(values[axis]) for axis in axes})
        params.validate(name, key_prefix)
        return params

    @classmethod
    def from_values(cls, name: str, values) -> "DesignParams":
        """Build from a tuple in `param_axes(name)` order"""
        axes = param_axes(name)
        if len(values) != len(axes):
            raise ContractError(f"design {name} takes {len(axes)} parameter values, got {len(values)}")
        return cls.from_mapping(name, dict(zip(axes, values)))

    def validate(self, name: str, key_prefix: str = "params"):
        axes = param_axes(name)
        for axis in PARAM_RANGES:
            value = getattr(self, axis)
            if axis in axes:
                if value is None:
                    raise ConfigurationError(f"design {name} requires {', '.join(axes)}", key=f"{key_prefix}.{axis}")
                check_param_value(axis, value, key_prefix)
            elif value is not None:
                raise ConfigurationError(f"not a parameter of design {name}", key=f"{key_prefix}.{axis}")

    def values(self, name: str) -> Tuple[float, ...]:
        return tuple(getattr(self, axis) for axis in param_axes(name))

    def to_dict(self, name: str) -> Dict[str, float]:
        return {axis: getattr(self, axis) for axis in param_axes(name)}


@dataclass(frozen=True)
class DesignAnchors:
    """Nominal area placement at primary position

    Limbus-relative anchors are fractions of the iris radius; the D2 center
    offset is in mm and the D4 spacing is a fraction of the area diameter.
    """
    d1_horizontal_x: float = 1.0
    d1_vertical_y: float = 1.0
    d2_center_x: float = 4.0
    d3_horizontal_x: float = 1.0
    d3_vertical_x: float = 0.5
    d3_vertical_y: float = 0.7
    d4_spacing: float = 0.75

    def __post_init__(self):
        if self.d4_spacing <= 0:
            raise ConfigurationError("must be > 0", key="design.anchors.d4_spacing")
        if self.d2_center_x <= 0:
            raise ConfigurationError("must be > 0", key="design.anchors.d2_center_x")


@dataclass(frozen=True)
class PsogDesign:
    """Detection areas and de-matrixing coefficients of one design"""
    name: str
    areas: Tuple[DetectionArea, ...]
    h_coeffs: Tuple[int, ...]
    v_coeffs: Tuple[int, ...]

    def __post_init__(self):
        if len(self.h_coeffs) != len(self.areas) or len(self.v_coeffs) != len(self.areas):
            raise ContractError(f"{self.name}: one coefficient per area required")
        if any(c not in (-1, 0, 1) for c in self.h_coeffs + self.v_coeffs):
            raise ContractError(f"{self.name}: coefficients must be -1, 0 or +1")

    @property
    def coefficient_matrix(self) -> np.ndarray:
        """(2, n_areas) matrix; row 0 horizontal, row 1 vertical"""
        return np.array([self.h_coeffs, self.v_coeffs], dtype=float)


def expected_coefficients(name: str, d1_vertical_mode: str = "difference") -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    h, v = _COEFFS[name]
    if name == "D1" and d1_vertical_mode == "sum":
        v = (0, 0, 1, 1)
    return h, v


def _design_areas(name: str, params: DesignParams, model: EyeModelConfig,
                  anchors: DesignAnchors) -> Tuple[DetectionArea, ...]:
    r = model.iris_radius
    if name == "D1":
        hx, vy = anchors.d1_horizontal_x * r, anchors.d1_vertical_y * r
        return (
            DetectionArea.rectangle(-hx, 0.0, params.length, params.width, 0.0),
            DetectionArea.rectangle(hx, 0.0, params.length, params.width, 0.0),
            DetectionArea.rectangle(0.0, -vy, params.length, params.width, 90.0),
            DetectionArea.rectangle(0.0, vy, params.length, params.width, 90.0),
        )
    if name == "D2":
        cx = anchors.d2_center_x
        return (
            DetectionArea.rectangle(-cx, 0.0, params.length, params.width, params.angle),
            DetectionArea.rectangle(cx, 0.0, params.length, params.width, -params.angle),
        )
    if name == "D3":
        hx = anchors.d3_horizontal_x * r
        vx, vy = anchors.d3_vertical_x * r, anchors.d3_vertical_y * r
        d = params.diameter
        return (
            DetectionArea.circle(-hx, 0.0, d),
            DetectionArea.circle(hx, 0.0, d),
            DetectionArea.circle(-vx, vy, d),
            DetectionArea.circle(vx, vy, d),
        )
    # D4: PS1 is the temporal end of the horizontal row and the top of the vertical column
    d = params.diameter
    spacing = anchors.d4_spacing * d
    offsets = [(k - 4) * spacing for k in range(9)]
    row_y = -params.pos_y
    column_x = -params.pos_x
    horizontal = tuple(DetectionArea.circle(x, row_y, d) for x in offsets)
    vertical = tuple(DetectionArea.circle(column_x, y, d) for y in offsets)
    return horizontal + vertical


def compose_design(name: str, horizontal_params: DesignParams, vertical_params: DesignParams,
                   model: EyeModelConfig, anchors: Optional[DesignAnchors] = None,
                   d1_vertical_mode: str = "difference") -> PsogDesign:
    """Design whose horizontal-channel areas and vertical-channel areas use separate parameters

    D2 shares both areas between channels, so both parameter sets must agree.
    """
    param_axes(name)
    if d1_vertical_mode not in D1_VERTICAL_MODES:
        raise ConfigurationError(f"must be one of {', '.join(D1_VERTICAL_MODES)}", key="design.d1_vertical_mode")
    anchors = anchors or DesignAnchors()
    horizontal_params.validate(name)
    vertical_params.validate(name, "vertical_params")
    if name == "D2" and horizontal_params != vertical_params:
        raise ConfigurationError("D2 areas feed both channels and take a single parameter set",
                                 key="vertical_params")

    h_areas = _design_areas(name, horizontal_params, model, anchors)
    v_areas = _design_areas(name, vertical_params, model, anchors)
    horizontal_idx = _HORIZONTAL_AREAS[name]
    areas = tuple(h_areas[i] if i in horizontal_idx else v_areas[i] for i in range(len(h_areas)))
    h_coeffs, v_coeffs = expected_coefficients(name, d1_vertical_mode)
    return PsogDesign(name, areas, h_coeffs, v_coeffs)


def build_design(name: str, params: DesignParams, model: EyeModelConfig,
                 anchors: Optional[DesignAnchors] = None, d1_vertical_mode: str = "difference") -> PsogDesign:
    """Place the detection areas of a design at its nominal anchors"""
    return compose_design(name, params, params, model, anchors, d1_vertical_mode)


def design_raw_output(design: PsogDesign, sensor_values):
    """De-matrix sensor values into (h_raw, v_raw)

    Accepts one vector of per-area values or a (n_samples, n_areas) matrix,
    returning floats or arrays respectively.
    """
    values = np.asarray(sensor_values, dtype=float)
    if values.ndim not in (1, 2) or values.shape[-1] != len(design.areas):
        raise ContractError(f"{design.name} expects {len(design.areas)} sensor values per sample, "
                            f"got shape {values.shape}")
    h = values @ np.asarray(design.h_coeffs, dtype=float)
    v = values @ np.asarray(design.v_coeffs, dtype=float)
    if values.ndim == 1:
        return float(h), float(v)
    return h, v
