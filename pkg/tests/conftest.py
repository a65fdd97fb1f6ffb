import pytest

from qofab.crypto import MacScheme, make_scheme


@pytest.fixture(params=["mac", "ed25519"])
def scheme(request):
    return make_scheme(request.param)


@pytest.fixture
def mac():
    return MacScheme()


def keyring(scheme, n, seed=7):
    keys = {p: scheme.keygen(seed, p) for p in range(1, n + 1)}
    return keys, {p: k.verify_key for p, k in keys.items()}


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(LINES):
            terminalreporter.write_line(line)
