import logging
from logging import LogRecord
from logging.handlers import QueueHandler
from multiprocessing import current_process, parent_process
from typing import Any, ClassVar

from .threadmanager import QueueReaderThread

__all__ = ["init_log_config", "ColorFormatter", "ConsoleHandler", "WorkerLogHandler", "LogRxThread", "logging"]


def init_log_config(level: int = logging.INFO, log_queue: Any = None):
    """Configure the root logger for the current process.

    The main process logs to the colour console. A worker process started by
    the ProcessManager forwards its records through ``log_queue`` to the
    LogRxThread of the main process instead.

    Args:
        level: Root log level.
        log_queue: Multiprocessing queue shared with the main process (workers only).
    """
    root_logger = logging.getLogger()
    root_logger.setLevel(level)

    proc = current_process()
    if hasattr(proc, "exit_stack") and log_queue is not None:
        if proc.exit_stack is None:
            raise RuntimeError("ManagedProcess exit_stack is not initialized.")
        handler = WorkerLogHandler(log_queue)
        proc.exit_stack.callback(handler.close)
        proc.exit_stack.callback(root_logger.removeHandler, handler)
        root_logger.addHandler(handler)
    elif parent_process() is None:
        console = ConsoleHandler()
        if console not in root_logger.handlers:
            root_logger.addHandler(console)


class ColorFormatter(logging.Formatter):
    """
    Logging formatter that adds ANSI colour codes to the level name.

    Attributes:
        FORMAT (str): The log message format string.
        COLORS (dict): Mapping of level names to ANSI colour codes.
        RESET (str): ANSI code to reset colour formatting.
    """
    FORMAT = '[%(levelname)s][%(processName)s:%(threadName)s](%(name)s): %(message)s'
    COLORS = {
        'DEBUG': '\033[36m',    # Cyan
        'INFO': '\033[32m',     # Green
        'WARNING': '\033[33m',  # Yellow
        'ERROR': '\033[31m',    # Red
        'CRITICAL': '\033[41m', # Red background
    }
    RESET = '\033[0m'

    def __init__(self, fmt: str = FORMAT):
        super().__init__(fmt=fmt)

    def format(self, record: logging.LogRecord) -> str:
        # Records may be shared between handlers, so colour a copy of the level name only.
        levelname = record.levelname
        color = self.COLORS.get(levelname, '')
        record.levelname = f"{color}{levelname}{self.RESET}"
        try:
            return super().format(record)
        finally:
            record.levelname = levelname


class ConsoleHandler(logging.StreamHandler):
    """
    Process-wide singleton stream handler using the ColorFormatter.
    """
    def __new__(cls):
        if not hasattr(cls, 'instance'):
            cls.instance = super(ConsoleHandler, cls).__new__(cls)
            cls.instance._configured = False
        return cls.instance

    def __init__(self):
        if self._configured:
            return
        super().__init__()
        self.setFormatter(ColorFormatter())
        self._configured = True


class WorkerLogHandler(QueueHandler):
    """Queue handler installed in worker processes.

    Records are formatted in the worker (so arguments and tracebacks survive
    pickling) and put on the queue shared with the main process.
    """

    def prepare(self, record: LogRecord) -> LogRecord:
        record = super().prepare(record)
        record.processName = current_process().name
        return record


class LogRxThread(QueueReaderThread):
    """Receives LogRecords from worker processes and hands them to the local logging tree."""
    NAME_BASE: ClassVar[str] = "LogRx"

    def handle(self, item: Any) -> None:
        if isinstance(item, LogRecord):
            logging.getLogger(item.name).handle(item)
        else:
            self._logger.warning(f"Received non-LogRecord: {item!r}")
