import numpy as np
import pytest

from leafsev.synth import leaf_fixture, render


@pytest.fixture(scope="session")
def leaf10():
    """Full-size 1280x720 leaf with about 10% disease."""
    spec = leaf_fixture(10, seed=7)
    img, truth, disease = render(spec)
    return spec, img, truth, disease


@pytest.fixture(scope="session")
def small_leaf():
    """Quarter-scale leaf so GrabCut tests stay fast."""
    spec = leaf_fixture(10, seed=3, width=320, height=180, leaf_px=7_500)
    img, truth, disease = render(spec)
    return spec, img, truth, disease


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from oracles import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}"
        terminalreporter.write_line(f"{line} ({detail})" if detail else line)
