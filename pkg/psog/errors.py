from typing import Optional


class PsogError(Exception):
    """Base class for every error raised by the simulator"""


class ConfigurationError(PsogError):
    """Invalid or missing configuration value"""

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class ParseError(PsogError):
    """Malformed config text or image payload"""

    def __init__(self, message: str, line: Optional[int] = None, offset: Optional[int] = None):
        self.line = line
        self.offset = offset
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte offset {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class GeometryError(PsogError):
    """Detection area that cannot be placed on the image"""


class VisibilityError(PsogError):
    """Surface point on the hemisphere facing away from the camera"""


class FitError(PsogError):
    """Calibration fit that cannot be solved"""

    def __init__(self, message: str, axis: str):
        self.axis = axis
        super().__init__(f"{axis} axis: {message}")


class ContractError(PsogError):
    """Arguments that do not line up (lengths, grids, sample alignment)"""
