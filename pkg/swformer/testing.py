"""
Helpers shared by the root test scripts: slow-test gating and the
plain-script runner that prints [OK]/[FAIL] lines.
"""

from __future__ import annotations

import sys
import tempfile
import traceback
from pathlib import Path
from typing import Any, Callable, Dict

import pytest

from swformer.config import settings


def require_slow(reason: str = "desk-scale training check") -> None:
    if not settings.SWF_RUN_SLOW:
        pytest.skip(f"{reason}; set SWF_RUN_SLOW=1 to run")


def scratch_dir(prefix: str = "swf-test-") -> Path:
    return Path(tempfile.mkdtemp(prefix=prefix))


def run_checks(title: str, namespace: Dict[str, Any]) -> int:
    """Run every test_* function in `namespace`; returns a process exit code."""
    print("=" * 60)
    print(title)
    print("=" * 60)

    tests = [(n, f) for n, f in namespace.items() if n.startswith("test_") and callable(f)]
    failed = 0
    for i, (name, fn) in enumerate(tests, 1):
        check: Callable[[], Any] = fn
        try:
            check()
            print(f"   {i:>2}. [OK]   {name}")
        except pytest.skip.Exception as e:
            print(f"   {i:>2}. [SKIP] {name}: {e}")
        except Exception as e:
            failed += 1
            print(f"   {i:>2}. [FAIL] {name}: {e}")
            traceback.print_exc()

    print("\n" + "=" * 60)
    if failed:
        print(f"{failed} of {len(tests)} checks failed")
    else:
        print(f"All {len(tests)} checks passed")
    print("=" * 60)
    return 1 if failed else 0


def main_for(title: str, namespace: Dict[str, Any]) -> None:
    sys.exit(run_checks(title, namespace))
