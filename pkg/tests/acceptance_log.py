"""Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
RESULTS = []


def record(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line
