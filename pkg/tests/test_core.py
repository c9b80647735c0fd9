import json
import logging
import math

import pytest

from sieveflow.core import ManagedProcess, ProcessManager
from sieveflow.core.errors import (
    ConfigurationError, EigenSolverError, EmptyLayoutError, FeasibilityError, MeshingError,
    NonconvergenceError, OutputError, ParameterError, PartialSweepError, ResolutionError, SolverError,
)
from sieveflow.core.utils import RunningStats, Stopwatch, atomic_write_json, git_blob_hash, json_safe, read_text


class SquareProcess(ManagedProcess):
    def __init__(self, x: float, *, name: str):
        super().__init__(name=name)
        self.x = x

    def task(self):
        if self.x < 0:
            raise FeasibilityError("negative input")
        return self.x * self.x


@pytest.mark.parametrize("error, code", [
    (ConfigurationError("x"), 2),
    (ParameterError("x"), 2),
    (EmptyLayoutError("x"), 2),
    (ResolutionError("x"), 2),
    (MeshingError("x"), 3),
    (SolverError("x"), 3),
    (NonconvergenceError("x", [1.0, 2.0]), 3),
    (EigenSolverError("x"), 3),
    (FeasibilityError("x"), 3),
    (OutputError("x"), 4),
])
def test_exit_codes(error, code):
    assert error.exit_code == code
    assert error.to_dict()["message"] == "x"


def test_configuration_error_is_value_error():
    with pytest.raises(ValueError):
        raise ParameterError("bad")


def test_partial_sweep_error_takes_cause_exit_code():
    err = PartialSweepError("stopped", NonconvergenceError("diverged", [1.0, 10.0]), report=None)
    assert err.exit_code == 3
    assert err.to_dict()["history"] == [1.0, 10.0]
    assert err.to_dict()["partial_rows"] == 0


def test_meshing_error_carries_report():
    err = MeshingError("bad cell", {"worst_cell": 7})
    assert err.to_dict()["report"] == {"worst_cell": 7}


def test_running_stats():
    stats = RunningStats(reference=1.0).extend([1.0, 2.0, 3.0, 4.0])
    assert stats.n == 4
    assert stats.mean == pytest.approx(2.5)
    assert stats.variance() == pytest.approx(5.0 / 3.0)
    assert stats.spread() == pytest.approx(3.0)


def test_running_stats_empty():
    stats = RunningStats()
    assert stats.spread() == 0.0
    assert stats.stddev() == 0.0


def test_git_blob_hash_matches_git():
    # git hash-object /dev/null
    assert git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"


def test_json_safe_replaces_non_finite():
    assert json_safe({"a": math.inf, "b": [math.nan, -math.inf, 1.0]}) == {"a": "inf", "b": ["nan", "-inf", 1.0]}


def test_atomic_write_json(tmp_path):
    path = tmp_path / "sub" / "doc.json"
    atomic_write_json(path, {"b": 1, "a": math.inf})
    assert json.loads(read_text(path)) == {"a": "inf", "b": 1}
    assert not (tmp_path / "sub" / "doc.json.tmp").exists()


def test_read_text_missing_file(tmp_path):
    with pytest.raises(OutputError):
        read_text(tmp_path / "missing.txt")


def test_stopwatch():
    with Stopwatch() as sw:
        sum(range(1000))
    assert sw.elapsed >= 0.0


def test_process_manager_collects_results():
    with ProcessManager(max_workers=2, log_level=logging.WARNING) as pm:
        for i, x in enumerate([2.0, 3.0, -1.0]):
            pm.register(SquareProcess(x, name=f"square-{i}"))
        results = pm.run()
    assert results["square-0"] == ("ok", 4.0)
    assert results["square-1"] == ("ok", 9.0)
    status, payload = results["square-2"]
    assert status == "error"
    assert payload["kind"] == "feasibility"
    assert payload["exit_code"] == 3


def test_process_manager_rejects_late_registration():
    with ProcessManager(max_workers=1) as pm:
        pm.run()
        with pytest.raises(RuntimeError):
            pm.register(SquareProcess(1.0, name="late"))
