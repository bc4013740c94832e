import numpy as np
import pytest

from chaos_anneal.model import PhysicalParams, to_dimensionless


@pytest.fixture(scope="session")
def fig2_physical():
    """Strong-nonlinearity laboratory parameter set used across tiers."""
    return PhysicalParams(
        omega_m_hz=525e3,
        quality_factor=1e7,
        input_power_w=0.4e-3,
        kerr_hz=1.625e-3,
        kappa_hz=220e3,
        kappa_in_hz=100e3,
        drive_frequency_hz=1e14,
        coupling_hz=25.0,
        detuning_hz=-0.3 * 525e3,
    )


@pytest.fixture(scope="session")
def fig2_dimensionless(fig2_physical):
    return to_dimensionless(fig2_physical)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
