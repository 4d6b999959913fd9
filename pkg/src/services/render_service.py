"""
Grayscale PNG rendering of scalar fields
"""
import logging
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from PIL import Image

from errors import ConfigError
from services.dump_service import FieldDump

logger = logging.getLogger(__name__)


def to_grayscale(field: NDArray) -> NDArray:
    """
    Linear map of |field| from 0 to its maximum onto 0..255, as image rows.

    The input is indexed [ix, iy]; the image has y increasing upwards.
    A zero field maps to black.
    """
    magnitude = np.abs(np.asarray(field))
    if magnitude.ndim != 2:
        raise ConfigError(f"Rendering needs a 2D field, got shape {magnitude.shape}")
    peak = float(np.max(magnitude, initial=0.0))
    if not np.isfinite(peak):
        raise ConfigError("Cannot render a field with non-finite values")
    scaled = np.zeros_like(magnitude) if peak == 0.0 else magnitude / peak
    pixels = np.round(255.0 * scaled).astype(np.uint8)
    return np.ascontiguousarray(np.flipud(pixels.T))


def render_scalar_field(field: NDArray, path: str) -> str:
    Image.fromarray(to_grayscale(field)).save(path, format="PNG")
    logger.info(f"Rendered {np.shape(field)} field to {path}")
    return path


def dump_scalar(dump: FieldDump, quantity: str = "norm", component: Optional[int] = None) -> NDArray:
    """Reduce a dump to a scalar field: the pointwise norm or a single component."""
    fields = dump.fields
    if quantity == "norm":
        return np.sqrt(np.sum(np.abs(fields) ** 2, axis=0))
    if quantity == "component":
        if component is None or not 0 <= component < fields.shape[0]:
            raise ConfigError(f"Component {component} out of range for a {fields.shape[0]}-component dump")
        return fields[component]
    raise ConfigError(f"Unknown render quantity '{quantity}'")
