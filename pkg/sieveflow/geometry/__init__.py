from .params import PipeParams, PerforationParams, hole_radius, max_hole_count
from .layout import (
    LayoutStrategy, PerforationLayout, ValidationReport, Violation, generate_layout, validate_layout,
)
