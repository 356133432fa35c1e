import numpy as np
import pytest

from ringboost import RingParams

# Five identical converters: 15 V sources boosted to 40 V into 170 ohm loads,
# coupled through 15 mH / 100 ohm lines.  Used throughout as the reference ring.
TABLE_L = 0.046
TABLE_C = 100e-6
TABLE_E = 15.0
TABLE_R2T = 170.0
TABLE_LT = 0.015
TABLE_R1T = 100.0
VCD = 40.0
U_BAL = 0.625                      # 1 - 15/40
IL_BAR_BAL = 15.0 / (170.0 * 0.375 ** 2)   # 0.62745098... A


@pytest.fixture(scope="session")
def ring5():
    return RingParams.uniform(5, L=TABLE_L, C=TABLE_C, E=TABLE_E,
                              R2T=TABLE_R2T, LT=TABLE_LT, R1T=TABLE_R1T)


@pytest.fixture(scope="session")
def duty_bal():
    return np.full(5, U_BAL)
