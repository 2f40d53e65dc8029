"""Out-of-boundary view synthesis for warping-based video stabilization."""

__version__ = "0.1.0"

from .canvas import composite, extrapolate
from .config import Config, load_config
from .core import Canvas, FlowField, Rect, pad_frame
from .expand import expand_sequence
from .fine import fine_align
from .stabilizer import stabilize

__all__ = [
    "Canvas",
    "Config",
    "FlowField",
    "Rect",
    "composite",
    "expand_sequence",
    "extrapolate",
    "fine_align",
    "load_config",
    "pad_frame",
    "stabilize",
]
