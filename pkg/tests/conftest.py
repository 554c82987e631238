import numpy as np
import pytest

from ii_adaptive.benchmarks import make_trig_diagonal
from ii_adaptive.gains import SatParams


@pytest.fixture(scope="session")
def trig():
    return make_trig_diagonal()


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)


# ---- shared actuator case-study objects (calibration is expensive) ----

SEA_SAT = SatParams(l_s=0.76, eps_s=0.4, l_theta=0.75)


@pytest.fixture(scope="session")
def normal():
    from ii_adaptive import sea as S

    return S.normal_from_theta((0.2, 0.4))


@pytest.fixture(scope="session")
def gains():
    from ii_adaptive import sea as S

    return S.SeaGains()


@pytest.fixture(scope="session")
def calib(normal, gains):
    from ii_adaptive import sea as S

    return S.calibrate_sea(normal, SEA_SAT, gains, n_samples=1024)


@pytest.fixture(scope="session")
def paper_run():
    """The default convergence experiment (criterion-1 configuration)."""
    from ii_adaptive import sea as S

    return S.reproduce_figures()
