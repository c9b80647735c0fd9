import logging
import queue
from abc import abstractmethod
from contextlib import AbstractContextManager, ExitStack
from multiprocessing import get_context
from multiprocessing.context import SpawnProcess
from typing import Any, ClassVar, Final

from .errors import SieveflowError
from .log import LogRxThread, init_log_config

_MP_CONTEXT: Final = get_context("spawn")


class ManagedProcess(SpawnProcess, AbstractContextManager):
    """A spawned worker with a context manager lifecycle.

    The worker runs ``task`` once and reports ``(name, status, payload)`` on the
    result queue handed out by its ProcessManager. Status is ``"ok"`` with the
    task's return value, or ``"error"`` with the error dict of the failure.
    Log records are forwarded to the main process through the log queue.

    Attributes:
        TIMEOUT: Seconds to wait for the process on context exit.
    """
    TIMEOUT: Final[int] = 5

    def __init__(self, *args, log_level: int = logging.NOTSET, **kwargs):
        super().__init__(*args, daemon=True, **kwargs)
        self._logger: logging.Logger = logging.getLogger(self.name)
        self._logger.setLevel(log_level)
        self.log_level = log_level
        self.exit_stack: ExitStack | None = None
        self.log_queue: Any = None
        self.result_queue: Any = None

    def _process_setup(self):
        """Setup method called in the process context."""
        self.exit_stack = ExitStack()
        init_log_config(self.log_level or logging.INFO, self.log_queue)
        self._logger.debug(f"[INIT] Process {self.name} initialized")

    def __enter__(self):
        self._logger.debug(f"[ENTER]")
        self.start()
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        if self.is_alive():
            self.join(timeout=self.TIMEOUT)
        if self.is_alive():
            self._logger.warning(f"{self.name} still alive after {self.TIMEOUT} s, terminating.")
            self.terminate()
        return False

    def run(self):
        status, payload = "error", {"kind": "crash", "message": "task did not run"}
        try:
            self._process_setup()
            self._logger.info(f"[RUN]")
            status, payload = "ok", self.task()
        except SieveflowError as e:
            self._logger.error(f"{type(e).__name__} in {self.name}: {e}")
            status, payload = "error", e.to_dict() | {"exit_code": e.exit_code}
        except Exception as e:
            self._logger.error(f"Exception in {self.name}: {e}", exc_info=True)
            status, payload = "error", {"kind": "crash", "error": type(e).__name__, "message": str(e)}
        finally:
            if self.result_queue is not None:
                self.result_queue.put((self.name, status, payload))
            self._logger.info(f"[EXIT]")
            if self.exit_stack is not None:
                self.exit_stack.close()

    @abstractmethod
    def task(self) -> Any:
        """Override this method in subclasses to define process behavior."""


class ProcessManager(ExitStack):
    """ Runs registered ManagedProcesses with bounded concurrency.

    Entering the manager creates the shared log and result queues and starts
    the LogRxThread; exiting joins every started process and stops the
    receiver once all worker records are drained.

    Args:
        max_workers: Number of processes allowed to run at the same time.
        log_level: Log level handed to the workers.
    """
    POLL_INTERVAL: ClassVar[float] = 0.5

    def __init__(self, max_workers: int = 2, log_level: int = logging.INFO):
        super().__init__()
        if max_workers < 1:
            raise ValueError(f"max_workers must be positive, got {max_workers}")
        self.max_workers = max_workers
        self.log_level = log_level
        self.log_queue: Any = None
        self.result_queue: Any = None
        self._processes: list[ManagedProcess] = []
        self._started = False
        self._logger = logging.getLogger("ProcessManager")
        self._logger.debug(f"[INIT] max_workers={max_workers}")

    def __enter__(self):
        super().__enter__()
        self.log_queue = _MP_CONTEXT.Queue()
        self.result_queue = _MP_CONTEXT.Queue()
        self.enter_context(LogRxThread(self.log_queue))
        self._logger.debug(f"[ENTER]")
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        suppress = super().__exit__(exc_type, exc_value, traceback)
        self._logger.debug(f"[EXIT]")
        return suppress

    def register(self, process: ManagedProcess) -> ManagedProcess:
        if self._started:
            raise RuntimeError("ProcessManager already started, cannot register processes.")
        if self.log_queue is None:
            raise RuntimeError("ProcessManager must be entered before registering processes.")
        process.log_queue = self.log_queue
        process.result_queue = self.result_queue
        process.log_level = process.log_level or self.log_level
        self._processes.append(process)
        return process

    def run(self) -> dict[str, tuple[str, Any]]:
        """Start every registered process and collect their results.

        Returns:
            Mapping of process name to ``(status, payload)``.
        """
        if self._started:
            raise RuntimeError("ProcessManager is locked, cannot start processes twice.")
        self._started = True

        pending = list(self._processes)
        running: list[ManagedProcess] = []
        results: dict[str, tuple[str, Any]] = {}
        while pending or running:
            while pending and len(running) < self.max_workers:
                proc = pending.pop(0)
                self.enter_context(proc)
                running.append(proc)
            try:
                name, status, payload = self.result_queue.get(timeout=self.POLL_INTERVAL)
            except queue.Empty:
                for proc in [p for p in running if not p.is_alive() and p.exitcode != 0]:
                    # Died without reporting, e.g. killed by the OS.
                    results[proc.name] = ("error", {"kind": "crash", "message": f"exit code {proc.exitcode}"})
                    running.remove(proc)
                continue
            results[name] = (status, payload)
            running = [p for p in running if p.name != name]
            self._logger.debug(f"{name} finished with status {status}")
        return results
