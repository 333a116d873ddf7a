"""Collects one PASS/FAIL line per acceptance criterion for the end-of-run summary."""

LINES: list[str] = []


def verdict(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    LINES.append(line)
    print(line)
    assert ok, line
