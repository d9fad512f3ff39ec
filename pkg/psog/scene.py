"""
Render and sensing context

A Scene bundles everything needed to turn an eye state into sensor values:
eye model, camera, lighting, sensor chain and the pupil dilation trajectory.
Rendered frames are memoized in a shared RenderCache. Eye states are always
quantized (0.01 degree, 0.05 mm) before rendering so that cached and
uncached runs produce identical values.
"""

import threading
import time
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from .debug_logger import debug_log, debug_timing, is_debug_enabled
from .designs import PsogDesign, design_raw_output
from .eye_render import (CameraConfig, DilationConfig, EyeImage, EyeModelConfig, EyeState,
                         LightingConfig, render_eye_image)
from .sensing import DetectionArea, Footprint, SensorChain, build_footprint

ANGLE_STEPS_PER_DEGREE = 100
PUPIL_STEPS_PER_MM = 20

StateKey = Tuple[int, int, int]


def quantize_state(yaw: float, pitch: float, pupil_diameter: float) -> StateKey:
    """Integer cache key of an eye state"""
    return (int(round(yaw * ANGLE_STEPS_PER_DEGREE)),
            int(round(pitch * ANGLE_STEPS_PER_DEGREE)),
            int(round(pupil_diameter * PUPIL_STEPS_PER_MM)))


def state_from_key(key: StateKey) -> EyeState:
    return EyeState(key[0] / ANGLE_STEPS_PER_DEGREE, key[1] / ANGLE_STEPS_PER_DEGREE,
                    key[2] / PUPIL_STEPS_PER_MM)


class RenderCache:
    """Thread-safe LRU of rendered frames"""

    def __init__(self, maxsize: int = 512):
        self.maxsize = maxsize
        self._frames: "OrderedDict[tuple, EyeImage]" = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key) -> Optional[EyeImage]:
        with self._lock:
            image = self._frames.get(key)
            if image is None:
                self.misses += 1
                return None
            self._frames.move_to_end(key)
            self.hits += 1
            return image

    def put(self, key, image: EyeImage):
        with self._lock:
            self._frames[key] = image
            self._frames.move_to_end(key)
            while len(self._frames) > self.maxsize:
                self._frames.popitem(last=False)

    def clear(self):
        with self._lock:
            self._frames.clear()
            self.hits = 0
            self.misses = 0

    def __len__(self) -> int:
        return len(self._frames)

    def stats(self):
        return {"hits": self.hits, "misses": self.misses, "size": len(self._frames)}


@lru_cache(maxsize=4096)
def _footprint(area: DetectionArea, shape: Tuple[int, int], mpp_x: float, mpp_y: float,
               center: Tuple[float, float], supersampling: int) -> Footprint:
    return build_footprint(area, shape, mpp_x, mpp_y, center, supersampling)


@dataclass(frozen=True)
class Scene:
    """Eye, camera, lighting and sensor chain shared by calibration and experiments"""
    model: EyeModelConfig = EyeModelConfig()
    camera: CameraConfig = CameraConfig()
    lighting: LightingConfig = LightingConfig()
    sensor: SensorChain = SensorChain()
    dilation: DilationConfig = DilationConfig()
    cache: Optional[RenderCache] = field(default=None, compare=False, hash=False, repr=False)

    def with_shift(self, shift_x: float, shift_y: float) -> "Scene":
        """Same scene with the camera displaced along the image axes"""
        return replace(self, camera=self.camera.with_shift(shift_x, shift_y))

    def with_cache(self, cache: Optional[RenderCache]) -> "Scene":
        return replace(self, cache=cache)

    def render_key(self, key: StateKey) -> EyeImage:
        cache_key = (self.model, self.camera, self.lighting, key)
        if self.cache is not None:
            image = self.cache.get(cache_key)
            if image is not None:
                return image

        start = time.time()
        image = render_eye_image(self.model, self.camera, state_from_key(key), self.lighting)
        if is_debug_enabled():
            debug_timing("render", (time.time() - start) * 1000, state=list(key),
                         shift=[self.camera.shift_x, self.camera.shift_y])
        if self.cache is not None:
            self.cache.put(cache_key, image)
        return image

    def render(self, state: EyeState) -> EyeImage:
        return self.render_key(quantize_state(state.yaw, state.pitch, state.pupil_diameter))

    def footprints(self, design: PsogDesign) -> Tuple[Footprint, ...]:
        camera = self.camera
        mpp = camera.mm_per_pixel
        shape = (camera.image_rows, camera.image_cols)
        return tuple(_footprint(area, shape, mpp, mpp, camera.optical_center,
                                self.model.supersampling_factor) for area in design.areas)

    def image_footprints(self, design: PsogDesign, image: EyeImage) -> Tuple[Footprint, ...]:
        """Footprints on the geometry recorded with an image (imported frames carry their own)"""
        return tuple(_footprint(area, image.shape, image.mm_per_pixel_x, image.mm_per_pixel_y,
                                image.optical_center, self.model.supersampling_factor) for area in design.areas)

    def image_sensor_values(self, design: PsogDesign, image: EyeImage) -> np.ndarray:
        """Binned intensity of every detection area on a given image"""
        return np.array([fp.apply(image) for fp in self.image_footprints(design, image)])

    def image_raw_outputs(self, design: PsogDesign, image: EyeImage) -> Tuple[float, float]:
        """Noise-free de-matrixed (h_raw, v_raw) for a given image"""
        return design_raw_output(design, self.sensor.convert(self.image_sensor_values(design, image)))

    def sensor_values_for_key(self, design: PsogDesign, key: StateKey) -> np.ndarray:
        image = self.render_key(key)
        return np.array([fp.apply(image) for fp in self.footprints(design)])

    def sensor_values(self, design: PsogDesign, state: EyeState) -> np.ndarray:
        """Binned intensity of every detection area of a design"""
        return self.sensor_values_for_key(design, quantize_state(state.yaw, state.pitch, state.pupil_diameter))

    def raw_outputs(self, design: PsogDesign, state: EyeState) -> Tuple[float, float]:
        """Noise-free de-matrixed (h_raw, v_raw) for one eye state"""
        return design_raw_output(design, self.sensor.convert(self.sensor_values(design, state)))

    def log_cache_stats(self, context: str):
        if self.cache is not None:
            debug_log("render_cache", dict(self.cache.stats(), context=context))
