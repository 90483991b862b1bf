import json

import pytest

from memreset.report import (
    RunManifest,
    pause_histogram,
    sha256_file,
    summary_markdown,
    token_distribution,
    verify_manifest,
)
from memreset.simulate import SimulationResult

from .conftest import make_thread


def test_token_distribution_by_position():
    dist = token_distribution([make_thread([10, 30]), make_thread([20, 40, 60])])
    rows = [(r.message_index, r.n, r.min, r.median, r.max) for r in dist.rows]
    assert rows == [(1, 2, 10, 15.0, 20), (2, 2, 30, 35.0, 40), (3, 1, 60, 60.0, 60)]
    assert dist.to_csv().decode().splitlines()[1] == "1,2,10,15,19,20"


def oracle_bin(x: int, b: int) -> int:
    """Largest k with 10**k <= x**b, i.e. 10**(k/b) <= x, in integers."""
    k = 0
    while 10 ** (k + 1) <= x**b:
        k += 1
    return k


def test_pause_histogram_decades():
    h = pause_histogram([make_thread([1, 2, 3, 4], pauses=[30, 300, 93_600])])
    assert h.edges[:6] == [1, 10, 100, 1000, 10_000, 100_000]
    assert h.counts == [0, 1, 1, 0, 1]
    assert h.total == 3 and h.underflow == 0


@pytest.mark.parametrize("b", [1, 2, 3, 4])
def test_pause_histogram_matches_integer_oracle(b):
    pauses = [1, 9, 10, 11, 99, 100, 101, 316, 317, 999, 1000, 10**5, 10**6 - 1, 0]
    h = pause_histogram([make_thread(list(range(len(pauses) + 1)), pauses=pauses)], b)
    expected = [0] * len(h.counts)
    for p in pauses:
        if p:
            expected[oracle_bin(p, b)] += 1
    assert h.counts == expected
    assert h.underflow == 1


def test_empty_inputs():
    h = pause_histogram([])
    assert (h.counts, h.underflow, h.total) == ([0], 0, 0)
    assert token_distribution([]).rows == []
    with pytest.raises(ValueError):
        pause_histogram([], 0)


def test_manifest_verify(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    out = tmp_path / "a.txt"
    out.write_text("hello")
    m = RunManifest("x", "0", {"k": 1})
    m.add_output(out)
    m.finish()
    path = tmp_path / "x.manifest.json"
    path.write_bytes(m.to_json())
    assert json.loads(path.read_text())["started_at"] == "1970-01-01T00:00:00Z"
    assert verify_manifest(path) == []
    out.write_text("changed")
    assert verify_manifest(path) == ["a.txt"]
    assert sha256_file(out) != m.outputs["a.txt"]


def test_summary_markdown():
    text = summary_markdown([SimulationResult(1800, 1000, 809, 2, 5, 3)], 3, 9).decode()
    assert "| 30 min | 809 | 19.1% | 2 of 3 | 5 |" in text
    assert "interpolated" not in text
    text = summary_markdown([SimulationResult(3600, 10, 10, 0, 0, 1)], 1, 1).decode()
    assert "interpolated" in text
