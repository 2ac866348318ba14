import numpy as np
import pytest

from clsprune.trace import AttentionTrace


def random_rows(rng, shape, extra=1):
    """Visual slices of random softmax rows that also cover ``extra`` other positions."""
    *lead, n = shape
    full = rng.dirichlet(np.ones(n + extra), size=tuple(lead) or None)
    return full[..., extra:].astype(np.float32)


def random_encoder_trace(rng, layers, heads, n_visual):
    return AttentionTrace.encoder(random_rows(rng, (layers, heads, n_visual)))


def random_decoder_trace(rng, layers, heads, outputs, n_visual):
    return AttentionTrace.decoder(random_rows(rng, (layers, heads, outputs, n_visual), extra=3))


@pytest.fixture
def rng():
    return np.random.default_rng(20241206)


_acceptance = {}
_notes = {}


@pytest.fixture
def note(request):
    """Attach a measurement line to the acceptance summary for this test."""
    name = request.node.name

    def add(text):
        _notes.setdefault(name, []).append(text)

    return add


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and (report.when == "call" or report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        if report.when == "call" or name not in _acceptance:
            _acceptance[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in sorted(_acceptance.items()):
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
        for text in _notes.get(name, []):
            terminalreporter.write_line(f"      {text}")
