# __init__.py for sieveflow/core module

from .log import init_log_config, logging
from .errors import (
    SieveflowError, ConfigurationError, ParameterError, EmptyLayoutError, ResolutionError,
    NumericalError, MeshingError, SolverError, NonconvergenceError, EigenSolverError,
    FeasibilityError, OutputError, PartialSweepError,
)
from .procmanager import ManagedProcess, ProcessManager
from .threadmanager import ManagedThread, QueueReaderThread
from .utils import RunningStats, Stopwatch, git_blob_hash
