import pytest

from wayfinder import build_knowledge, load_experiment

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def experiment():
    return load_experiment()


@pytest.fixture(scope="session")
def knowledge(experiment):
    return build_knowledge(experiment)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


_BATCHES = {}


def batch(label, n_runs=50, procedures=(2, 3, 4)):
    """Session-cached calibration batch, so several tests can share one."""
    from wayfinder import harness

    key = (label, n_runs, tuple(procedures))
    if key not in _BATCHES:
        base = load_experiment()
        if label == "zero":
            cfg = base.config.replace(kappa_tt=0, kappa_q=0, kappa_f=0)
        else:
            cfg = harness.calibrate(base.config, label)
        _BATCHES[key] = harness.run_batch(procedures, cfg, n_runs, 0, label, base)
    return _BATCHES[key]
