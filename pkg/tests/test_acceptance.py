"""Acceptance suite: one test per criterion, each printing a pass/fail line.

The measurements live in ``criteria.py``; the last test reruns all of them
into a fresh directory and compares every CSV byte for byte.
"""

import time

import pytest

import criteria

FIRST_RUN = {}


@pytest.fixture(scope="session")
def run_dirs(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance_a"), tmp_path_factory.mktemp("acceptance_b")


def _run(k, out_dir, capsys=None):
    out = criteria.CRITERIA[k](out_dir)
    FIRST_RUN[k] = out
    if capsys is not None:
        with capsys.disabled():
            print("\n" + out.line())
    return out


@pytest.mark.parametrize("k", range(1, 12))
def test_criterion(k, run_dirs, capsys):
    out = _run(k, run_dirs[0], capsys)
    assert out.passed, out.line()


def test_criterion_12_determinism(run_dirs, capsys):
    first, second = run_dirs
    for k in range(1, 12):
        if k not in FIRST_RUN:
            _run(k, first)
    t0 = time.perf_counter()
    kept = len(criteria.RESULTS)
    criteria._CACHE.clear()
    for k in range(1, 12):
        criteria.CRITERIA[k](second)
    del criteria.RESULTS[kept:]
    a = criteria.csv_snapshot(first)
    b = criteria.csv_snapshot(second)
    differing = sorted(name for name in set(a) | set(b) if a.get(name) != b.get(name))
    ok = not differing and len(a) > 0
    out = criteria.Outcome(12, "determinism", ok, time.perf_counter() - t0, float("inf"),
                           {f"{len(a)} CSV files identical": ok})
    criteria.RESULTS.append(out)
    with capsys.disabled():
        print("\n" + out.line())
    assert ok, differing
