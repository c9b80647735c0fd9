from .fields import ConfigField, ConfigSection
from .runconfig import RESOLVED_NAME, SECTIONS, RunConfig
