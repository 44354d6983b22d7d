import numpy as np

from levychaos.experiments import CRITERIA, Checkpoint, CriterionResult, map_ordered, thread_count, to_json


def test_criterion_line_format():
    r = CriterionResult(4, "example", False, {"x": 1.0}, 2.5)
    assert r.line() == "FAIL criterion  4: example (2.5 s)"
    assert CriterionResult(12, "t", True, {}, 0.04).line().startswith("PASS criterion 12: t")


def test_all_criteria_registered():
    assert sorted(CRITERIA) == list(range(1, 15))


def test_checkpoint_caches(tmp_path):
    ck = Checkpoint(str(tmp_path))
    calls = []

    def compute():
        calls.append(1)
        return np.arange(5.0)

    a = ck.get("x", compute)
    b = ck.get("x", compute)
    assert np.array_equal(a, b) and len(calls) == 1


def test_map_ordered_preserves_order():
    assert map_ordered(lambda x: x * x, range(10), threads=3) == [x * x for x in range(10)]


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("LEVYCHAOS_THREADS", "3")
    assert thread_count() == 3
    assert thread_count(2) == 2


def test_to_json_handles_numpy():
    s = to_json({"a": np.float64(1.5), "b": np.arange(2), "c": np.bool_(True)})
    assert '"a": 1.5' in s and "true" in s


def test_small_criteria_pass():
    for i in (1, 5):
        assert CRITERIA[i](scale=0.1).passed
