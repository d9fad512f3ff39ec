"""
Procedural eye renderer

Replaces a full 3-D scene with a parametric one: a spherical eyeball carrying
concentric iris and pupil caps, periocular skin behind a static elliptical
eyelid aperture, and a pinhole camera looking at the cornea apex.

Axes (mm, origin at the eyeball center): x grows toward the nasal side of the
left eye and maps to image columns, y grows downward and maps to image rows,
z points from the eye toward the camera.
"""

import io
import json
import math
import re
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np
from PIL import Image

from .errors import ConfigurationError, ParseError, VisibilityError

# Region labels used while rasterizing
PUPIL, IRIS, SCLERA, SKIN = 0, 1, 2, 3


def _require(condition: bool, key: str, message: str):
    if not condition:
        raise ConfigurationError(message, key=key)


@dataclass(frozen=True)
class EyeModelConfig:
    """Geometry and reflectances of the synthetic eye"""
    eyeball_diameter: float = 24.0
    iris_diameter: float = 9.5
    reflectance_sclera: float = 0.85
    reflectance_iris: float = 0.25
    reflectance_pupil: float = 0.05
    reflectance_skin: float = 0.65
    eyelid_aperture_height: float = 11.0
    eyelid_aperture_width: float = 28.0
    eyelids_enabled: bool = True
    supersampling_factor: int = 4

    def __post_init__(self):
        _require(self.iris_diameter > 0, "iris_diameter", "must be > 0")
        _require(self.eyeball_diameter > self.iris_diameter, "eyeball_diameter",
                 "must be larger than iris_diameter")
        for name in ("reflectance_sclera", "reflectance_iris", "reflectance_pupil", "reflectance_skin"):
            _require(0.0 <= getattr(self, name) <= 1.0, name, "must lie in [0, 1]")
        _require(self.reflectance_sclera > self.reflectance_iris > self.reflectance_pupil,
                 "reflectance_iris", "requires sclera > iris > pupil reflectance")
        _require(self.eyelid_aperture_height > 0, "eyelid_aperture_height", "must be > 0")
        _require(self.eyelid_aperture_width > 0, "eyelid_aperture_width", "must be > 0")
        _require(isinstance(self.supersampling_factor, int) and self.supersampling_factor >= 1,
                 "supersampling_factor", "must be an integer >= 1")

    @property
    def eyeball_radius(self) -> float:
        return self.eyeball_diameter / 2.0

    @property
    def iris_radius(self) -> float:
        return self.iris_diameter / 2.0


@dataclass(frozen=True)
class CameraConfig:
    """Pinhole camera; the shift is the sensor-frame displacement after calibration"""
    distance_to_eye: float = 50.0
    field_of_view: float = 45.0
    image_rows: int = 240
    image_cols: int = 320
    shift_x: float = 0.0
    shift_y: float = 0.0

    def __post_init__(self):
        _require(self.distance_to_eye > 0, "distance_to_eye", "must be > 0")
        _require(0 < self.field_of_view < 180, "field_of_view", "must lie in (0, 180) degrees")
        _require(isinstance(self.image_rows, int) and self.image_rows > 0, "image_rows", "must be a positive integer")
        _require(isinstance(self.image_cols, int) and self.image_cols > 0, "image_cols", "must be a positive integer")

    @property
    def focal_length_px(self) -> float:
        # field of view spans the image width
        return (self.image_cols / 2.0) / math.tan(math.radians(self.field_of_view) / 2.0)

    @property
    def mm_per_pixel(self) -> float:
        """Scale on the plane tangent to the cornea apex"""
        return self.distance_to_eye / self.focal_length_px

    @property
    def optical_center(self) -> Tuple[float, float]:
        return ((self.image_rows - 1) / 2.0, (self.image_cols - 1) / 2.0)

    def with_shift(self, shift_x: float, shift_y: float) -> "CameraConfig":
        return CameraConfig(self.distance_to_eye, self.field_of_view, self.image_rows,
                            self.image_cols, float(shift_x), float(shift_y))


@dataclass(frozen=True)
class LightingConfig:
    """Uniform ambient light, optionally with Lambertian point sources

    Source positions are in mm relative to the pupil center at primary
    position and move together with the camera.
    """
    mode: str = "ambient"
    ambient_level: float = 1.0
    sources: Tuple[Tuple[float, float, float], ...] = ((-14.0, 10.0, 30.0), (14.0, 10.0, 30.0))
    source_intensity: float = 0.3

    def __post_init__(self):
        _require(self.mode in ("ambient", "point_sources"), "mode", "must be 'ambient' or 'point_sources'")
        _require(0.0 <= self.ambient_level <= 1.0, "ambient_level", "must lie in [0, 1]")
        _require(self.source_intensity >= 0.0, "source_intensity", "must be >= 0")
        object.__setattr__(self, "sources", tuple(tuple(float(c) for c in s) for s in self.sources))
        for source in self.sources:
            _require(len(source) == 3, "sources", "each source needs (x, y, z)")

    @classmethod
    def point_sources(cls) -> "LightingConfig":
        return cls(mode="point_sources", ambient_level=0.4)


@dataclass(frozen=True)
class EyeState:
    """Ground-truth pose: positive yaw is nasal (left eye), positive pitch is downward"""
    yaw: float = 0.0
    pitch: float = 0.0
    pupil_diameter: float = 4.0

    def __post_init__(self):
        _require(abs(self.yaw) <= 45.0, "yaw", "must lie in [-45, 45] degrees")
        _require(abs(self.pitch) <= 45.0, "pitch", "must lie in [-45, 45] degrees")
        _require(self.pupil_diameter > 0, "pupil_diameter", "must be > 0")


@dataclass(frozen=True)
class SurfacePoint:
    """Point on the eyeball in eye-fixed degrees; (0, 0) is the cornea apex"""
    azimuth: float
    elevation: float


@dataclass(frozen=True)
class DilationConfig:
    """Slow deterministic pupil dilation used while simulating signals"""
    enabled: bool = True
    min_diameter: float = 3.6
    max_diameter: float = 4.6
    period_s: float = 10.0
    fixed_diameter: float = 4.0

    def __post_init__(self):
        _require(0 < self.min_diameter <= self.max_diameter, "min_diameter", "must satisfy 0 < min <= max")
        _require(self.period_s > 0, "period_s", "must be > 0")
        _require(self.fixed_diameter > 0, "fixed_diameter", "must be > 0")


def pupil_diameter_at(t, dilation: DilationConfig) -> np.ndarray:
    """Pupil diameter (mm) at times t (s)"""
    t = np.asarray(t, dtype=float)
    if not dilation.enabled:
        return np.full(t.shape, dilation.fixed_diameter)
    mid = (dilation.min_diameter + dilation.max_diameter) / 2.0
    amplitude = (dilation.max_diameter - dilation.min_diameter) / 2.0
    return mid + amplitude * np.sin(2.0 * np.pi * t / dilation.period_s)


@dataclass(frozen=True, eq=False)
class EyeImage:
    """Immutable grid of reflectance intensities with projection metadata"""
    intensities: np.ndarray
    mm_per_pixel_x: float
    mm_per_pixel_y: float
    optical_center: Tuple[float, float]
    fill_value: float = 0.65

    def __post_init__(self):
        data = np.array(self.intensities, dtype=np.float64)
        if data.ndim != 2 or data.size == 0:
            raise ConfigurationError("must be a non-empty 2-D grid", key="intensities")
        if not np.all((data >= 0.0) & (data <= 1.0)):
            raise ConfigurationError("values must lie in [0, 1]", key="intensities")
        _require(self.mm_per_pixel_x > 0 and self.mm_per_pixel_y > 0, "mm_per_pixel", "must be > 0")
        _require(0.0 <= self.fill_value <= 1.0, "fill_value", "must lie in [0, 1]")
        data.flags.writeable = False
        object.__setattr__(self, "intensities", data)
        object.__setattr__(self, "optical_center", (float(self.optical_center[0]), float(self.optical_center[1])))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.intensities.shape


def eye_rotation(state: EyeState) -> np.ndarray:
    """Rotation taking eye-fixed directions to world directions"""
    y, p = math.radians(state.yaw), math.radians(state.pitch)
    r_yaw = np.array([[math.cos(y), 0.0, math.sin(y)],
                      [0.0, 1.0, 0.0],
                      [-math.sin(y), 0.0, math.cos(y)]])
    r_pitch = np.array([[1.0, 0.0, 0.0],
                        [0.0, math.cos(p), math.sin(p)],
                        [0.0, -math.sin(p), math.cos(p)]])
    return r_yaw @ r_pitch


def gaze_direction(state: EyeState) -> np.ndarray:
    y, p = math.radians(state.yaw), math.radians(state.pitch)
    return np.array([math.cos(p) * math.sin(y), math.sin(p), math.cos(p) * math.cos(y)])


def camera_position(model: EyeModelConfig, camera: CameraConfig) -> np.ndarray:
    """Pinhole position; a sensor shift translates the image plane, not the pinhole"""
    return np.array([0.0, 0.0, model.eyeball_radius + camera.distance_to_eye])


def rig_offset(camera: CameraConfig) -> np.ndarray:
    """Displacement of the sensor rig (and the lights mounted on it)"""
    return np.array([camera.shift_x, camera.shift_y, 0.0])


def shift_in_pixels(camera: CameraConfig) -> Tuple[float, float]:
    """(row, col) displacement of the frame content for the camera shift"""
    mpp = camera.mm_per_pixel
    return -camera.shift_y / mpp, -camera.shift_x / mpp


def project_eye_point(model: EyeModelConfig, camera: CameraConfig, state: EyeState,
                      surface_point: SurfacePoint) -> Tuple[float, float]:
    """Project an eye-fixed surface point to fractional (row, col) pixel coordinates"""
    az, el = math.radians(surface_point.azimuth), math.radians(surface_point.elevation)
    local = np.array([math.cos(el) * math.sin(az), math.sin(el), math.cos(el) * math.cos(az)])
    point = model.eyeball_radius * (eye_rotation(state) @ local)
    cam = camera_position(model, camera)

    if float(np.dot(point, cam - point)) <= 0.0:
        raise VisibilityError(
            f"surface point ({surface_point.azimuth}, {surface_point.elevation}) is not visible "
            f"at yaw={state.yaw}, pitch={state.pitch}")

    depth = cam[2] - point[2]
    f = camera.focal_length_px
    cy, cx = camera.optical_center
    row_shift, col_shift = shift_in_pixels(camera)
    return (cy + f * point[1] / depth + row_shift, cx + f * point[0] / depth + col_shift)


def _subsample_axis(n: int, center: float, s: int) -> np.ndarray:
    offsets = (np.arange(s) + 0.5) / s - 0.5
    return ((np.arange(n) - center)[:, None] + offsets[None, :]).ravel()


def render_eye_image(model: EyeModelConfig, camera: CameraConfig, state: EyeState,
                     lighting: Optional[LightingConfig] = None) -> EyeImage:
    """Render a supersampled grayscale eye image for one eye state"""
    lighting = lighting or LightingConfig()
    if state.pupil_diameter >= model.iris_diameter:
        raise ConfigurationError("must be smaller than iris_diameter", key="pupil_diameter")

    s = model.supersampling_factor
    rows, cols = camera.image_rows, camera.image_cols
    f = camera.focal_length_px
    cy, cx = camera.optical_center
    radius = model.eyeball_radius

    # ray directions (x, y, -1) through every subsample; the shift offsets the image plane
    row_shift, col_shift = shift_in_pixels(camera)
    dx = (_subsample_axis(cols, cx + col_shift, s) / f)[None, :]
    dy = (_subsample_axis(rows, cy + row_shift, s) / f)[:, None]
    cam = camera_position(model, camera)

    # nearest ray/sphere intersection
    a = dx * dx + dy * dy + 1.0
    b = 2.0 * (cam[0] * dx + cam[1] * dy - cam[2])
    c = float(np.dot(cam, cam)) - radius * radius
    disc = b * b - 4.0 * a * c
    hit = disc >= 0.0
    t = (-b - np.sqrt(np.where(hit, disc, 0.0))) / (2.0 * a)
    px = cam[0] + t * dx
    py = cam[1] + t * dy
    pz = cam[2] - t

    g = gaze_direction(state)
    cos_angle = (px * g[0] + py * g[1] + pz * g[2]) / radius
    cos_iris = math.sqrt(1.0 - (model.iris_radius / radius) ** 2)
    cos_pupil = math.sqrt(1.0 - (state.pupil_diameter / 2.0 / radius) ** 2)

    labels = np.full(hit.shape, SCLERA, dtype=np.int8)
    labels[cos_angle >= cos_iris] = IRIS
    labels[cos_angle >= cos_pupil] = PUPIL

    # head-fixed lid aperture on the apex plane
    lid_t = camera.distance_to_eye
    qx = cam[0] + lid_t * dx
    qy = cam[1] + lid_t * dy
    covered = ~hit
    if model.eyelids_enabled:
        half_w, half_h = model.eyelid_aperture_width / 2.0, model.eyelid_aperture_height / 2.0
        covered = covered | ((qx / half_w) ** 2 + (qy / half_h) ** 2 > 1.0)
    labels[covered] = SKIN

    reflectance = np.array([model.reflectance_pupil, model.reflectance_iris,
                            model.reflectance_sclera, model.reflectance_skin])

    if lighting.mode == "ambient":
        # region counts keep the pixel sum independent of subsample order
        blocks = labels.reshape(rows, s, cols, s)
        weighted = np.zeros((rows, cols))
        for region in (PUPIL, IRIS, SCLERA, SKIN):
            count = np.count_nonzero(blocks == region, axis=(1, 3))
            weighted += count * (reflectance[region] * lighting.ambient_level)
        pixels = weighted / (s * s)
    else:
        shading = _point_source_shading(lighting, cam + rig_offset(camera), radius, covered,
                                         np.where(covered, qx, px), np.where(covered, qy, py),
                                         np.where(covered, radius, pz))
        values = np.clip(reflectance[labels] * shading, 0.0, 1.0)
        blocks = values.reshape(rows, s, cols, s).transpose(0, 2, 1, 3).reshape(rows, cols, s * s)
        # sorted so the sum is independent of subsample order
        pixels = np.sort(blocks, axis=-1).sum(axis=-1) / (s * s)

    mpp = camera.mm_per_pixel
    return EyeImage(np.clip(pixels, 0.0, 1.0), mpp, mpp, camera.optical_center,
                    fill_value=model.reflectance_skin * lighting.ambient_level)


def _point_source_shading(lighting: LightingConfig, rig: np.ndarray, radius: float,
                          on_skin: np.ndarray, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    nx = np.where(on_skin, 0.0, x / radius)
    ny = np.where(on_skin, 0.0, y / radius)
    nz = np.where(on_skin, 1.0, z / radius)
    shading = np.full(x.shape, lighting.ambient_level)
    for sx, sy, sz in lighting.sources:
        lx = rig[0] + sx - x
        ly = rig[1] + sy - y
        lz = radius + sz - z
        norm = np.sqrt(lx * lx + ly * ly + lz * lz)
        lambert = (nx * lx + ny * ly + nz * lz) / norm
        shading = shading + lighting.source_intensity * np.maximum(lambert, 0.0)
    return shading


# Portable graymap (P5) exchange

_WHITESPACE = b" \t\r\n\x0b\x0c"


def _next_token(payload: bytes, pos: int) -> Tuple[bytes, int]:
    n = len(payload)
    while pos < n:
        if payload[pos] in _WHITESPACE:
            pos += 1
        elif payload[pos:pos + 1] == b"#":
            while pos < n and payload[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    start = pos
    while pos < n and payload[pos] not in _WHITESPACE and payload[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ParseError("unexpected end of header", offset=start)
    return payload[start:pos], start


def _header_int(payload: bytes, pos: int, name: str) -> Tuple[int, int]:
    token, start = _next_token(payload, pos)
    if not re.fullmatch(rb"[0-9]+", token):
        raise ParseError(f"invalid {name} {token!r}", offset=start)
    value = int(token)
    if value <= 0:
        raise ParseError(f"{name} must be positive", offset=start)
    return value, start + len(token)


def import_eye_image(payload: bytes, metadata: Optional[Mapping[str, Any]]) -> EyeImage:
    """Load a binary P5 graymap plus its sidecar metadata

    The header is checked here so errors can name byte offsets; the raster
    itself is decoded by Pillow.
    """
    if payload[:2] != b"P5":
        if payload[:2] == b"P2":
            raise ParseError("ASCII graymap (P2) is not supported, expected P5", offset=0)
        raise ParseError(f"bad magic {payload[:2]!r}, expected P5", offset=0)

    pos = 2
    if pos >= len(payload) or (payload[pos] not in _WHITESPACE and payload[pos:pos + 1] != b"#"):
        raise ParseError("missing whitespace after magic", offset=pos)
    width, pos = _header_int(payload, pos, "width")
    height, pos = _header_int(payload, pos, "height")
    maxval, pos = _header_int(payload, pos, "maxval")
    if maxval > 65535:
        raise ParseError(f"maxval {maxval} exceeds 65535", offset=pos)
    if pos >= len(payload) or payload[pos] not in _WHITESPACE:
        raise ParseError("missing whitespace before pixel data", offset=pos)
    pos += 1

    sample_bytes = 1 if maxval < 256 else 2
    expected = width * height * sample_bytes
    if len(payload) - pos < expected:
        raise ParseError(f"truncated pixel data, expected {expected} bytes", offset=len(payload))
    raster = payload[pos:pos + expected]
    if sample_bytes == 1:
        frame = Image.frombytes("L", (width, height), raster)
    else:
        frame = Image.frombytes("I", (width, height), raster, "raw", "I;16B")
    samples = np.asarray(frame).reshape(height, width)
    too_large = np.flatnonzero(samples > maxval)
    if too_large.size:
        raise ParseError(f"sample exceeds maxval {maxval}", offset=pos + int(too_large[0]) * sample_bytes)

    if metadata is None:
        raise ConfigurationError("missing sidecar metadata for imported image", key="sidecar")
    for key in ("mm_per_pixel_x", "mm_per_pixel_y", "optical_center"):
        if key not in metadata:
            raise ConfigurationError("missing from sidecar metadata", key=key)
    center = metadata["optical_center"]
    if len(center) != 2:
        raise ConfigurationError("must be [row, col]", key="optical_center")

    intensities = samples.astype(np.float64) / maxval
    return EyeImage(intensities, float(metadata["mm_per_pixel_x"]), float(metadata["mm_per_pixel_y"]),
                    (float(center[0]), float(center[1])),
                    fill_value=float(metadata.get("fill_value", EyeModelConfig.reflectance_skin)))


def export_eye_image(image: EyeImage) -> Tuple[bytes, Dict[str, Any]]:
    """Write a 16-bit P5 graymap (maxval 65535) and the sidecar record describing it"""
    samples = np.round(image.intensities * 65535.0).astype(np.int32)
    buffer = io.BytesIO()
    # 32-bit integer frames are written by Pillow as 16-bit P5
    Image.fromarray(samples).save(buffer, format="PPM")
    sidecar = {
        "mm_per_pixel_x": image.mm_per_pixel_x,
        "mm_per_pixel_y": image.mm_per_pixel_y,
        "optical_center": [image.optical_center[0], image.optical_center[1]],
        "fill_value": image.fill_value,
    }
    return buffer.getvalue(), sidecar


def write_sidecar(sidecar: Mapping[str, Any]) -> str:
    return json.dumps(dict(sidecar), indent=2, sort_keys=True) + "\n"


def read_sidecar(text: str) -> Dict[str, Any]:
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid sidecar JSON: {e.msg}", line=e.lineno)
