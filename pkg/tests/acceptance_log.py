"""Collects one result line per acceptance criterion for the terminal summary."""

import contextlib
import time

import pytest

LINES = []


@contextlib.contextmanager
def criterion(number, title):
    start = time.perf_counter()
    try:
        yield
    except pytest.skip.Exception as exc:
        _emit(f"[criterion {number}] SKIP {title}: {exc}")
        raise
    except BaseException as exc:
        _emit(f"[criterion {number}] FAIL {title} ({time.perf_counter() - start:.2f}s): {type(exc).__name__}: {exc}".splitlines()[0])
        raise
    _emit(f"[criterion {number}] PASS {title} ({time.perf_counter() - start:.2f}s)")


def _emit(line):
    LINES.append(line)
    print(line)
