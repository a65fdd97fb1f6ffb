"""Verdict lines collected by the acceptance suite and printed at the end of the session."""

LINES = []


def verdict(number: int, title: str, ok: bool, detail: str) -> bool:
    LINES.append((number, f"criterion {number} {'PASS' if ok else 'FAIL'} {title}: {detail}"))
    return ok
