import pytest

from atsplit.model import (
    DeviceSpec,
    DriveParams,
    ThreeLevelModel,
    rates_from_coherence_times,
)

#: Published device values used throughout the tests.
T1_US = 39.0
T2_STAR_US = 51.0
OMEGA_P = 0.186
OMEGA01_GHZ = 4.294085
OMEGA12_GHZ = 4.116609
FIG3_COUPLERS = (0.354, 0.707, 1.41, 2.82, 5.63, 11.2)


@pytest.fixture(scope="session")
def paper_rates():
    return rates_from_coherence_times(T1_US, T2_STAR_US)


@pytest.fixture(scope="session")
def paper_device():
    return DeviceSpec(omega01=OMEGA01_GHZ, omega12=OMEGA12_GHZ)


@pytest.fixture()
def paper_model(paper_rates):
    """Probe-only model at the published probe amplitude."""
    return ThreeLevelModel(DriveParams(omega_p=OMEGA_P), paper_rates)
