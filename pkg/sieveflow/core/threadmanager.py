import logging
import queue
import threading
from contextlib import ExitStack
from functools import wraps
from typing import Any, Callable, ClassVar, Final

threading.main_thread().name = "Main"


def run_ctx(run_method: Callable[[Any], None]) -> Callable[[Any], None]:
    """ Decorator for the run method of ManagedThread subclasses.

    The body runs with a fresh exit stack that is always closed; an escaping
    exception is logged instead of killing the interpreter's thread silently.
    """
    @wraps(run_method)
    def wrapper(self: "ManagedThread", *args, **kwargs):
        with ExitStack() as self.exit_stack:
            self._logger.debug("[RUN]")
            try:
                return run_method(self, *args, **kwargs)
            except Exception as e:
                self._logger.error(f"{self.name} died: {e}", exc_info=True)
            finally:
                self._logger.debug("[EXIT]")

    return wrapper


class ManagedThread(threading.Thread):
    """Daemon thread started by ``with`` and stopped (then joined) on exit."""
    NAME_BASE: ClassVar[str] = "MThread"
    JOIN_TIMEOUT: ClassVar[float] = 2.0
    _instance_cnt: ClassVar[int] = 0

    def __init__(self, *, log_level: int = logging.NOTSET):
        cls = type(self)
        cls._instance_cnt = cls.__dict__.get("_instance_cnt", 0) + 1
        super().__init__(name=f"{self.NAME_BASE}-{cls._instance_cnt}", daemon=True)
        self.stopping = threading.Event()
        self.exit_stack: ExitStack | None = None
        self._logger = logging.getLogger(self.name)
        self._logger.setLevel(log_level)

    def __enter__(self):
        self._logger.debug("[ENTER]")
        self.start()
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        if exc_type is not None:
            self._logger.error(f"(Suppressed) {exc_value}", exc_info=(exc_type, exc_value, traceback))
        self.stop(self.JOIN_TIMEOUT)
        return False

    def stop(self, timeout: float | None = None):
        if self is threading.current_thread():
            raise RuntimeError(f"{self.name} cannot stop itself")
        if not self.stopping.is_set():
            self.stopping.set()
            self._logger.debug("[STOPSIG]")
        if timeout:
            self.join(timeout)
            if self.is_alive():
                self._logger.warning(f"{self.name} still alive after {timeout} s")

    def run(self):
        raise NotImplementedError


class QueueReaderThread(ManagedThread):
    """Hands every item of a (multiprocessing) queue to ``handle``.

    Stopping posts a sentinel, so items queued before ``stop`` are still handled.
    """
    NAME_BASE: ClassVar[str] = "QueueReader"
    SENTINEL: Final[None] = None
    POLL_INTERVAL: ClassVar[float] = 0.1

    def __init__(self, source: Any, **kwargs):
        super().__init__(**kwargs)
        self.source = source

    def handle(self, item: Any) -> None:
        raise NotImplementedError

    @run_ctx
    def run(self):
        while True:
            try:
                item = self.source.get(timeout=self.POLL_INTERVAL)
            except queue.Empty:
                if self.stopping.is_set():
                    return
                continue
            except (EOFError, OSError):
                self._logger.debug("queue closed by the writer")
                return
            if item is self.SENTINEL:
                return
            self.handle(item)

    def stop(self, timeout: float | None = None):
        if self.is_alive():
            self.source.put(self.SENTINEL)
        super().stop(timeout)
