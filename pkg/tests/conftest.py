import numpy as np
import pytest

from ptspinn.models import init_params
from ptspinn.problems import SampleCounts, get_problem, network_field, sample


@pytest.fixture
def rng():
    return np.random.default_rng(20241018)


@pytest.fixture
def tiny():
    """Width-8, 2-block network on Burgers with a 16-point batch."""
    spec = get_problem("burgers")
    net = spec.network_config(width=8, num_blocks=2)
    theta = init_params(net, 3)
    batch = sample(spec, SampleCounts(16, 8, 8), seed=5)
    return spec, net, theta, batch


def central_fd(f, x, h=1e-6):
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        up, dn = x.copy(), x.copy()
        up.flat[i] += h
        dn.flat[i] -= h
        g.flat[i] = (f(up) - f(dn)) / (2 * h)
    return g


def scalar(v):
    return float(np.asarray(getattr(v, "value", v)))


__all__ = ["central_fd", "scalar", "network_field"]


# acceptance criteria report one line each, echoed live and again in the summary
_ACCEPT_KEY = pytest.StashKey[list]()


@pytest.fixture
def accept(request):
    config = request.config
    lines = config.stash.setdefault(_ACCEPT_KEY, [])
    reporter = config.pluginmanager.get_plugin("terminalreporter")

    def report(n: int, ok: bool, detail: str):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPT_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
