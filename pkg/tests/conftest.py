import numpy as np
import pytest

from fsirnn import synth
from fsirnn.spline_basis import make_basis


def tecator_like(N=215, seed=0, link="sine", noise_sd=0.05):
    """215 x 100 absorbance-style curves on an 850..1050 grid."""
    basis = make_basis((850.0, 1050.0), 30, 4)
    spec = synth.default_spec(
        N, seed=seed, basis=basis, link=link, noise_sd=noise_sd, grid=np.linspace(850.0, 1050.0, 100)
    )
    return synth.generate(spec)


def classif_like(N=120, H=3, seed=0):
    spec = synth.default_spec(N, seed=seed, task="classification", n_classes=H, noise_sd=0.05, grid=np.linspace(0, 10, 40))
    return synth.generate(spec)


@pytest.fixture(scope="session")
def tecator_data():
    return tecator_like()[0]


@pytest.fixture(scope="session")
def classif_data():
    return classif_like()[0]


# criterion number -> one-line verdict, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
