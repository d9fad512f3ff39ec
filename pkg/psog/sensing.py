"""
Photosensor simulation

A sensor's raw output is a window binning of the image region under its
detection area: plain (coverage-weighted) averaging for masked rectangles,
Gaussian-modulated summation for unmasked circular sensors. The photodiode
model converts that reflected intensity into a current.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigurationError, ContractError, GeometryError
from .eye_render import EyeImage

Q_ELECTRON = 1.602176634e-19   # C
K_BOLTZMANN = 1.380649e-23     # J/K

RECTANGLE = "rectangle"
CIRCULAR_GAUSSIAN = "circular_gaussian"


@dataclass(frozen=True)
class DetectionArea:
    """Sensitive region of one photosensor

    Centers are mm offsets from the pupil center at primary position, on the
    image axes (x toward nasal, y downward). A rectangle's length axis is
    tilted by `angle` degrees from horizontal, positive tilting up to the right.
    """
    shape: str
    center_x: float
    center_y: float
    length: Optional[float] = None
    width: Optional[float] = None
    angle: Optional[float] = None
    diameter: Optional[float] = None

    def __post_init__(self):
        if self.shape == RECTANGLE:
            if self.length is None or self.width is None or self.angle is None or self.diameter is not None:
                raise ConfigurationError("rectangle needs length, width, angle and no diameter", key="shape")
            if self.length <= 0 or self.width <= 0:
                raise ConfigurationError("rectangle sides must be > 0", key="length")
            if not -90.0 <= self.angle <= 90.0:
                raise ConfigurationError("must lie in [-90, 90] degrees", key="angle")
        elif self.shape == CIRCULAR_GAUSSIAN:
            if self.diameter is None or any(v is not None for v in (self.length, self.width, self.angle)):
                raise ConfigurationError("circular_gaussian needs only a diameter", key="shape")
            if self.diameter <= 0:
                raise ConfigurationError("must be > 0", key="diameter")
        else:
            raise ConfigurationError(f"unknown shape {self.shape!r}", key="shape")

    @classmethod
    def rectangle(cls, center_x: float, center_y: float, length: float, width: float,
                  angle: float = 0.0) -> "DetectionArea":
        return cls(RECTANGLE, float(center_x), float(center_y), length=float(length),
                   width=float(width), angle=float(angle))

    @classmethod
    def circle(cls, center_x: float, center_y: float, diameter: float) -> "DetectionArea":
        return cls(CIRCULAR_GAUSSIAN, float(center_x), float(center_y), diameter=float(diameter))


def gaussian_window_weights(rows: int, cols: int) -> np.ndarray:
    """Separable Gaussian over a window, sigma = half the window size per axis, peak 1"""
    if rows < 1 or cols < 1:
        raise ContractError("window must be at least 1x1")
    sigma_y, sigma_x = rows / 2.0, cols / 2.0
    dr = np.arange(rows) - (rows - 1) / 2.0
    dc = np.arange(cols) - (cols - 1) / 2.0
    return np.exp(-(dr[:, None] ** 2 / (2.0 * sigma_y ** 2) + dc[None, :] ** 2 / (2.0 * sigma_x ** 2)))


def bin_window(window: np.ndarray, modulated: bool = False) -> float:
    """Window binning: sum of (optionally Gaussian-weighted) pixels over the pixel count"""
    window = np.asarray(window, dtype=float)
    rows, cols = window.shape
    weights = gaussian_window_weights(rows, cols) if modulated else 1.0
    return float(np.sum(weights * window) / (rows * cols))


@dataclass(frozen=True, eq=False)
class Footprint:
    """Per-pixel weights of one detection area on one image geometry"""
    image_shape: Tuple[int, int]
    row0: int
    col0: int
    weights: np.ndarray
    normalizer: float
    outside_weight: float
    image_rows: slice = field(init=False)
    image_cols: slice = field(init=False)
    window_rows: slice = field(init=False)
    window_cols: slice = field(init=False)

    def __post_init__(self):
        rows, cols = self.image_shape
        h, w = self.weights.shape
        r_lo, r_hi = max(self.row0, 0), min(self.row0 + h, rows)
        c_lo, c_hi = max(self.col0, 0), min(self.col0 + w, cols)
        r_hi, c_hi = max(r_hi, r_lo), max(c_hi, c_lo)
        object.__setattr__(self, "image_rows", slice(r_lo, r_hi))
        object.__setattr__(self, "image_cols", slice(c_lo, c_hi))
        object.__setattr__(self, "window_rows", slice(r_lo - self.row0, r_hi - self.row0))
        object.__setattr__(self, "window_cols", slice(c_lo - self.col0, c_hi - self.col0))

    def apply(self, image: EyeImage) -> float:
        if image.shape != self.image_shape:
            raise ContractError(f"footprint built for {self.image_shape}, image is {image.shape}")
        inside = self.weights[self.window_rows, self.window_cols]
        total = float(np.sum(inside * image.intensities[self.image_rows, self.image_cols]))
        return (total + image.fill_value * self.outside_weight) / self.normalizer


def build_footprint(area: DetectionArea, image_shape: Tuple[int, int], mm_per_pixel_x: float,
                    mm_per_pixel_y: float, optical_center: Tuple[float, float],
                    supersampling: int = 4) -> Footprint:
    """Rasterize a detection area onto the pixel grid of an image geometry"""
    rows, cols = image_shape
    cy, cx = optical_center

    if area.shape == CIRCULAR_GAUSSIAN:
        win_cols = max(1, int(round(area.diameter / mm_per_pixel_x)))
        win_rows = max(1, int(round(area.diameter / mm_per_pixel_y)))
        center_col = cx + area.center_x / mm_per_pixel_x
        center_row = cy + area.center_y / mm_per_pixel_y
        col0 = int(math.floor(center_col - (win_cols - 1) / 2.0 + 0.5))
        row0 = int(math.floor(center_row - (win_rows - 1) / 2.0 + 0.5))
        weights = gaussian_window_weights(win_rows, win_cols)
        normalizer = float(win_rows * win_cols)
    else:
        row0, col0, weights = _rectangle_coverage(area, mm_per_pixel_x, mm_per_pixel_y, optical_center, supersampling)
        normalizer = float(np.sum(weights))

    h, w = weights.shape
    if row0 + h <= -rows or row0 >= 2 * rows or col0 + w <= -cols or col0 >= 2 * cols:
        raise GeometryError(f"detection area at ({area.center_x}, {area.center_y}) mm lies outside the padded frame")
    if normalizer <= 0.0:
        raise GeometryError(f"detection area at ({area.center_x}, {area.center_y}) mm covers no pixel")

    in_rows = slice(max(-row0, 0), max(min(rows - row0, h), 0))
    in_cols = slice(max(-col0, 0), max(min(cols - col0, w), 0))
    outside = float(np.sum(weights)) - float(np.sum(weights[in_rows, in_cols]))
    return Footprint((rows, cols), row0, col0, weights, normalizer, max(outside, 0.0))


def _rectangle_coverage(area: DetectionArea, mpp_x: float, mpp_y: float,
                        optical_center: Tuple[float, float], s: int):
    cy, cx = optical_center
    theta = math.radians(area.angle)
    cos_a, sin_a = math.cos(theta), math.sin(theta)
    half_l, half_w = area.length / 2.0, area.width / 2.0
    ext_x = half_l * abs(cos_a) + half_w * abs(sin_a)
    ext_y = half_l * abs(sin_a) + half_w * abs(cos_a)

    col_lo = int(math.floor(cx + (area.center_x - ext_x) / mpp_x)) - 1
    col_hi = int(math.ceil(cx + (area.center_x + ext_x) / mpp_x)) + 1
    row_lo = int(math.floor(cy + (area.center_y - ext_y) / mpp_y)) - 1
    row_hi = int(math.ceil(cy + (area.center_y + ext_y) / mpp_y)) + 1

    offsets = (np.arange(s) + 0.5) / s - 0.5
    # offsets from the optical center keep mirrored areas exactly mirrored
    x = ((np.arange(col_lo, col_hi + 1) - cx)[:, None] + offsets[None, :]).ravel() * mpp_x - area.center_x
    y = ((np.arange(row_lo, row_hi + 1) - cy)[:, None] + offsets[None, :]).ravel() * mpp_y - area.center_y
    u = x[None, :] * cos_a - y[:, None] * sin_a
    v = x[None, :] * sin_a + y[:, None] * cos_a
    inside = (np.abs(u) <= half_l) & (np.abs(v) <= half_w)

    n_rows, n_cols = row_hi - row_lo + 1, col_hi - col_lo + 1
    counts = np.count_nonzero(inside.reshape(n_rows, s, n_cols, s), axis=(1, 3))
    return row_lo, col_lo, counts / float(s * s)


def compute_sensor_output(image: EyeImage, area: DetectionArea, supersampling: int = 4) -> float:
    """Raw photosensor output of one detection area on one image"""
    footprint = build_footprint(area, image.shape, image.mm_per_pixel_x, image.mm_per_pixel_y,
                                image.optical_center, supersampling)
    return footprint.apply(image)


@dataclass(frozen=True)
class PhotodiodeConfig:
    """Photodiode as a controlled current source in parallel with an exponential diode"""
    responsivity: float = 0.5
    reverse_saturation_current: float = 1e-9
    bias_voltage: float = 0.0
    temperature: float = 300.0
    noise_stddev: float = 0.0

    def __post_init__(self):
        if self.responsivity <= 0:
            raise ConfigurationError("must be > 0", key="responsivity")
        if self.temperature <= 0:
            raise ConfigurationError("must be > 0", key="temperature")
        if self.noise_stddev < 0:
            raise ConfigurationError("must be >= 0", key="noise_stddev")
        if self.reverse_saturation_current < 0:
            raise ConfigurationError("must be >= 0", key="reverse_saturation_current")


def photodiode_current(config: PhotodiodeConfig, incident_power):
    """Output current I_p - I_d for incident light power in watts"""
    power = np.asarray(incident_power, dtype=float)
    if np.any(power < 0):
        raise ContractError("incident power must be >= 0")
    photo = config.responsivity * power
    thermal_voltage = K_BOLTZMANN * config.temperature / Q_ELECTRON
    dark = config.reverse_saturation_current * math.expm1(config.bias_voltage / thermal_voltage)
    current = photo - dark
    return float(current) if current.ndim == 0 else current


@dataclass(frozen=True)
class SensorChain:
    """Conversion from binned intensity to the value a sensor reports

    With the photodiode stage off the binned intensity is reported directly.
    Noise is additive Gaussian, in amps with the photodiode stage on and in
    intensity units otherwise.
    """
    photodiode: PhotodiodeConfig = PhotodiodeConfig()
    use_photodiode: bool = False
    optical_power_w: float = 1e-6
    noise_stddev: float = 0.0

    def __post_init__(self):
        if self.optical_power_w <= 0:
            raise ConfigurationError("must be > 0", key="optical_power_w")
        if self.noise_stddev < 0:
            raise ConfigurationError("must be >= 0", key="noise_stddev")

    @property
    def effective_noise(self) -> float:
        return self.photodiode.noise_stddev if self.use_photodiode else self.noise_stddev

    def convert(self, intensities) -> np.ndarray:
        values = np.asarray(intensities, dtype=float)
        if self.use_photodiode:
            return np.asarray(photodiode_current(self.photodiode, values * self.optical_power_w), dtype=float)
        return values.copy()

    def measure(self, intensities, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        values = self.convert(intensities)
        noise = self.effective_noise
        if noise > 0.0:
            if rng is None:
                raise ContractError("a seeded generator is required when sensor noise is enabled")
            values = values + rng.normal(0.0, noise, size=values.shape)
        return values
