"""
Run configuration

The configuration is a JSON document merged into a nested default document
in strict mode (unknown keys are errors), then converted into frozen,
self-validating dataclasses. The canonical serialization is the basis of the
config hash recorded in every results manifest.
"""

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

from .debug_logger import debug_error, debug_log
from .designs import DESIGN_NAMES, D1_VERTICAL_MODES, DesignAnchors, DesignParams
from .errors import ConfigurationError, ParseError
from .eye_render import CameraConfig, DilationConfig, EyeModelConfig, LightingConfig
from .experiments import ScanpathConfig, ShiftExperimentConfig, SweepGrid
from .scene import RenderCache, Scene
from .sensing import PhotodiodeConfig, SensorChain

MODES = ("single", "sweep", "tradeoff", "shift")
FORMATS = ("csv", "svg")

# Parameters used when a single or shift run names a design without parameters
DEFAULT_PARAMS = {
    "D1": {"length": 4.0, "width": 2.0},
    "D2": {"length": 4.0, "width": 2.0, "angle": 30.0},
    "D3": {"diameter": 4.0},
    # outer D4 elements only reach the limbus for small diameters
    "D4": {"diameter": 2.5, "pos_y": 0.0, "pos_x": 0.0},
}


@dataclass(frozen=True)
class SceneConfig:
    eye_model: EyeModelConfig = EyeModelConfig()
    camera: CameraConfig = CameraConfig()
    lighting: LightingConfig = LightingConfig()
    sensor: SensorChain = SensorChain()
    dilation: DilationConfig = DilationConfig()

    def build_scene(self, cache: Optional[RenderCache] = None) -> Scene:
        return Scene(self.eye_model, self.camera, self.lighting, self.sensor, self.dilation, cache)


@dataclass(frozen=True)
class DesignConfig:
    name: str = "D1"
    params: Optional[DesignParams] = None
    vertical_params: Optional[DesignParams] = None
    grid: Optional[SweepGrid] = None
    anchors: DesignAnchors = DesignAnchors()
    d1_vertical_mode: str = "difference"

    def __post_init__(self):
        if self.name not in DESIGN_NAMES:
            raise ConfigurationError(f"must be one of {', '.join(DESIGN_NAMES)}", key="design.name")
        if self.d1_vertical_mode not in D1_VERTICAL_MODES:
            raise ConfigurationError(f"must be one of {', '.join(D1_VERTICAL_MODES)}", key="design.d1_vertical_mode")
        if self.params is not None:
            self.params.validate(self.name, "design.params")
        if self.vertical_params is not None:
            self.vertical_params.validate(self.name, "design.vertical_params")
            if self.name == "D2" and self.vertical_params != self.effective_params:
                raise ConfigurationError("D2 takes a single parameter set", key="design.vertical_params")
        if self.grid is not None and self.grid.design != self.name:
            raise ConfigurationError("grid belongs to another design", key="design.grid")

    @property
    def effective_params(self) -> DesignParams:
        return self.params or DesignParams.from_mapping(self.name, DEFAULT_PARAMS[self.name])

    @property
    def effective_vertical_params(self) -> DesignParams:
        return self.vertical_params or self.effective_params

    @property
    def effective_grid(self) -> SweepGrid:
        return self.grid or SweepGrid.full_grid(self.name)


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "single"
    settle_ms: float = 80.0
    render_cache: bool = True
    cache_size: int = 512
    shift: ShiftExperimentConfig = ShiftExperimentConfig()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"must be one of {', '.join(MODES)}", key="experiment.mode")
        if self.settle_ms < 0:
            raise ConfigurationError("must be >= 0", key="experiment.settle_ms")
        if not isinstance(self.cache_size, int) or self.cache_size < 1:
            raise ConfigurationError("must be a positive integer", key="experiment.cache_size")


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "results"
    formats: Tuple[str, ...] = FORMATS
    seed: int = 0
    record_timestamps: bool = False

    def __post_init__(self):
        object.__setattr__(self, "formats", tuple(self.formats))
        for fmt in self.formats:
            if fmt not in FORMATS:
                raise ConfigurationError(f"unknown format {fmt!r}", key="output.formats")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError("must be a 64-bit unsigned integer", key="output.seed")


@dataclass(frozen=True)
class RunConfig:
    scene: SceneConfig = SceneConfig()
    design: DesignConfig = DesignConfig()
    scanpath: ScanpathConfig = ScanpathConfig()
    experiment: ExperimentConfig = ExperimentConfig()
    output: OutputConfig = OutputConfig()

    def build_scene(self) -> Scene:
        cache = RenderCache(self.experiment.cache_size) if self.experiment.render_cache else None
        return self.scene.build_scene(cache)


def _construct(cls, section: Dict[str, Any], path: str):
    try:
        return cls(**section)
    except TypeError as e:
        raise ConfigurationError(f"invalid value type ({e})", key=path)
    except ConfigurationError as e:
        # section-local keys get the dotted document path
        if e.key and not e.key.startswith(path.split(".")[0] + "."):
            raise ConfigurationError(str(e)[len(e.key) + 2:], key=f"{path}.{e.key}") from e
        raise


class ConfigManager:
    """Strict JSON configuration: defaults, merge, validation, canonical form"""

    def __init__(self):
        self.default_config = self._get_default_config()

    def _get_default_config(self) -> Dict[str, Any]:
        """Nested default document; keys absent here are rejected"""
        return {
            'scene': {
                'eye_model': dataclasses.asdict(EyeModelConfig()),
                'camera': {
                    'distance_to_eye': 50.0,
                    'field_of_view': 45.0,
                    'image_rows': 240,
                    'image_cols': 320,
                },
                'lighting': {
                    'mode': 'ambient',
                    'ambient_level': 1.0,
                    'sources': [[-14.0, 10.0, 30.0], [14.0, 10.0, 30.0]],
                    'source_intensity': 0.3,
                },
                'sensor': {
                    'use_photodiode': False,
                    'optical_power_w': 1e-6,
                    'noise_stddev': 0.0,
                    'photodiode': dataclasses.asdict(PhotodiodeConfig()),
                },
                'dilation': dataclasses.asdict(DilationConfig()),
            },
            'design': {
                'name': 'D1',
                'params': None,
                'vertical_params': None,
                'grid': None,
                'anchors': dataclasses.asdict(DesignAnchors()),
                'd1_vertical_mode': 'difference',
            },
            'scanpath': {
                'sample_rate': 1000.0,
                'dwell_seconds': 1.0,
                'amplitudes': [2.5, 5.0, 7.5, 10.0],
                'initial_center_dwells': 4,
                'ramp_ms': 0.0,
            },
            'experiment': {
                'mode': 'single',
                'settle_ms': 80.0,
                'render_cache': True,
                'cache_size': 512,
                'shift': {
                    'shift_values': list(ShiftExperimentConfig().shift_values),
                    'eye_positions': list(ShiftExperimentConfig().eye_positions),
                    'combinations': list(ShiftExperimentConfig().combinations),
                },
            },
            'output': {
                'directory': 'results',
                'formats': list(FORMATS),
                'seed': 0,
                'record_timestamps': False,
            },
        }

    def _merge_config(self, defaults: Dict, user_config: Dict, path: str = "") -> Dict:
        """Recursively merge user values into defaults, rejecting unknown keys"""
        result = defaults.copy()
        for key, value in user_config.items():
            dotted = f"{path}.{key}" if path else key
            if key not in result:
                raise ConfigurationError("unknown key", key=dotted)
            if isinstance(result[key], dict):
                if not isinstance(value, dict):
                    raise ConfigurationError("must be a section (JSON object)", key=dotted)
                result[key] = self._merge_config(result[key], value, dotted)
            else:
                result[key] = value
        return result

    def parse(self, text: str) -> RunConfig:
        debug_log("config_load_start", {"length": len(text)})
        try:
            document = json.loads(text)
        except json.JSONDecodeError as e:
            debug_error("config_parse_error", e.msg, {"line": e.lineno})
            raise ParseError(f"invalid JSON: {e.msg}", line=e.lineno)
        if not isinstance(document, dict):
            raise ParseError("configuration must be a JSON object", line=1)
        try:
            config = self.build(self._merge_config(self.default_config, document))
        except ConfigurationError as e:
            debug_error("config_validation_error", str(e), {"key": e.key})
            raise
        debug_log("config_load_complete", {"mode": config.experiment.mode, "design": config.design.name})
        return config

    def build(self, document: Dict[str, Any]) -> RunConfig:
        """Typed RunConfig from a fully merged document"""
        scene_doc = document['scene']
        sensor_doc = dict(scene_doc['sensor'])
        photodiode = _construct(PhotodiodeConfig, sensor_doc.pop('photodiode'), "scene.sensor.photodiode")
        lighting_doc = dict(scene_doc['lighting'])
        lighting_doc['sources'] = tuple(tuple(s) for s in lighting_doc['sources'])
        scene = SceneConfig(
            _construct(EyeModelConfig, scene_doc['eye_model'], "scene.eye_model"),
            _construct(CameraConfig, scene_doc['camera'], "scene.camera"),
            _construct(LightingConfig, lighting_doc, "scene.lighting"),
            _construct(SensorChain, dict(sensor_doc, photodiode=photodiode), "scene.sensor"),
            _construct(DilationConfig, scene_doc['dilation'], "scene.dilation"),
        )

        design_doc = document['design']
        name = design_doc['name']
        if name not in DESIGN_NAMES:
            raise ConfigurationError(f"must be one of {', '.join(DESIGN_NAMES)}", key="design.name")
        params = self._design_params(name, design_doc['params'], "design.params")
        vertical = self._design_params(name, design_doc['vertical_params'], "design.vertical_params")
        grid = None
        if design_doc['grid'] is not None:
            if not isinstance(design_doc['grid'], dict):
                raise ConfigurationError("must be a section (JSON object)", key="design.grid")
            grid = SweepGrid(name, tuple((axis, tuple(values)) for axis, values in design_doc['grid'].items()))
        design = DesignConfig(name, params, vertical, grid,
                              _construct(DesignAnchors, design_doc['anchors'], "design.anchors"),
                              design_doc['d1_vertical_mode'])

        scanpath_doc = dict(document['scanpath'])
        scanpath_doc['amplitudes'] = tuple(scanpath_doc['amplitudes'])
        scanpath = _construct(ScanpathConfig, scanpath_doc, "scanpath")

        experiment_doc = dict(document['experiment'])
        experiment_doc['shift'] = _construct(ShiftExperimentConfig, experiment_doc['shift'], "experiment.shift")
        experiment = _construct(ExperimentConfig, experiment_doc, "experiment")
        output = _construct(OutputConfig, document['output'], "output")
        return RunConfig(scene, design, scanpath, experiment, output)

    @staticmethod
    def _design_params(name: str, values: Optional[Dict[str, Any]], path: str) -> Optional[DesignParams]:
        if values is None:
            return None
        if not isinstance(values, dict):
            raise ConfigurationError("must be a section (JSON object)", key=path)
        return DesignParams.from_mapping(name, values, path)

    def to_document(self, config: RunConfig) -> Dict[str, Any]:
        scene = config.scene
        sensor = dataclasses.asdict(scene.sensor)
        design = config.design
        return {
            'scene': {
                'eye_model': dataclasses.asdict(scene.eye_model),
                'camera': {
                    'distance_to_eye': scene.camera.distance_to_eye,
                    'field_of_view': scene.camera.field_of_view,
                    'image_rows': scene.camera.image_rows,
                    'image_cols': scene.camera.image_cols,
                },
                'lighting': dataclasses.asdict(scene.lighting),
                'sensor': sensor,
                'dilation': dataclasses.asdict(scene.dilation),
            },
            'design': {
                'name': design.name,
                'params': design.params.to_dict(design.name) if design.params else None,
                'vertical_params': design.vertical_params.to_dict(design.name) if design.vertical_params else None,
                'grid': {axis: list(values) for axis, values in design.grid.axes} if design.grid else None,
                'anchors': dataclasses.asdict(design.anchors),
                'd1_vertical_mode': design.d1_vertical_mode,
            },
            'scanpath': dataclasses.asdict(config.scanpath),
            'experiment': dataclasses.asdict(config.experiment),
            'output': dataclasses.asdict(config.output),
        }

    def serialize(self, config: RunConfig) -> str:
        """Canonical JSON: sorted keys, fixed separators"""
        return json.dumps(self.to_document(config), sort_keys=True, separators=(",", ":"))

    def config_hash(self, config: RunConfig) -> str:
        return hashlib.sha256(self.serialize(config).encode("utf-8")).hexdigest()


def load_config(path: Optional[str]) -> RunConfig:
    """Read a config file; no path means all defaults"""
    if path is None:
        return RunConfig()
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigurationError(f"cannot read {path}: {e.strerror}", key="--config")
    return config_manager.parse(text)


def apply_overrides(config: RunConfig, seed: Optional[int] = None, directory: Optional[str] = None,
                    mode: Optional[str] = None) -> RunConfig:
    """Command-line flags take precedence over the config file"""
    output = config.output
    if seed is not None:
        output = dataclasses.replace(output, seed=seed)
    if directory is not None:
        output = dataclasses.replace(output, directory=directory)
    experiment = config.experiment
    if mode is not None:
        experiment = dataclasses.replace(experiment, mode=mode)
    return dataclasses.replace(config, output=output, experiment=experiment)


# Global config manager instance
config_manager = ConfigManager()


def parse_config(text: str) -> RunConfig:
    return config_manager.parse(text)


def serialize_config(config: RunConfig) -> str:
    return config_manager.serialize(config)


def config_hash(config: RunConfig) -> str:
    return config_manager.config_hash(config)
