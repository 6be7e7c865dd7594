import numpy as np
import pytest

from bikedyn import BicycleParams, paper_table1


@pytest.fixture(scope="session")
def params():
    """The bundled Table 1 parameter set."""
    return paper_table1()


@pytest.fixture(scope="session")
def benchmark_params():
    """Carvallo-Whipple benchmark bicycle of Meijaard et al. (2007).

    Published values use a z-down body frame; heights and products of
    inertia are converted to the z-up convention used here (z -> -z
    flips the sign of x-z products and of center-of-mass z offsets).
    """
    return BicycleParams(
        w=1.02, c=0.08, lam=np.pi / 10.0, g=9.81,
        m_r=2.0, R_r=0.3, I_rxx=0.0603, I_ryy=0.12,
        m_b=85.0, x_b=0.3, z_b=0.9,
        I_bxx=9.2, I_byy=11.0, I_bzz=2.8, I_bxz=-2.4,
        m_h=4.0, x_h=0.9, z_h=0.7,
        I_hxx=0.05892, I_hyy=0.06, I_hzz=0.00708, I_hxz=0.00756,
        m_f=3.0, R_f=0.35, I_fxx=0.1405, I_fyy=0.28,
    )
