import os
import sys
import tempfile
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# one threshold cache per session, shared by every test
_CACHE = tempfile.mkdtemp(prefix="cpopt-cache-")
os.environ["CPOPT_CACHE_DIR"] = _CACHE

ACCEPTANCE: dict[int, str] = {}


def record(number: int, ok: bool, text: str) -> None:
    ACCEPTANCE[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {text}"
    print(ACCEPTANCE[number])


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
