import math

import numpy as np
import pytest

from condensation import (
    ZETA_3_2,
    bose_occupation,
    condensate_curve,
    condensate_fraction,
    critical_temperature,
    normal_density,
    normal_density_closed_form,
)
from errors import ConfigurationError, DivergentOccupationError


def test_bose_occupation():
    assert bose_occupation(math.log(2.0), 1.0) == pytest.approx(1.0)
    assert bose_occupation(1e3, 1.0) == pytest.approx(0.0, abs=1e-300)
    values = bose_occupation(np.array([0.5, 1.0, 2.0]), 1.0, mu=-0.1)
    assert np.all(np.diff(values) < 0)


def test_bose_occupation_rejects():
    with pytest.raises(DivergentOccupationError):
        bose_occupation(0.0, 1.0)
    with pytest.raises(ConfigurationError):
        bose_occupation(1.0, 1.0, mu=0.5)


def test_normal_density():
    assert normal_density(2.0 * math.pi, 1.0) == pytest.approx(2.612375348685488, rel=1e-6)
    assert ZETA_3_2 == pytest.approx(2.612375348685488, rel=1e-12)
    assert normal_density(4.0) == pytest.approx(normal_density(1.0) * 4.0**-1.5, rel=1e-8)
    assert normal_density(math.inf) == 0.0
    assert normal_density(0.3, 2.0) == pytest.approx(normal_density_closed_form(0.3, 2.0), rel=1e-8)


def test_critical_temperature():
    theta_c = critical_temperature(1.0, 1.0)
    closed = (1.0 / ZETA_3_2) ** (2.0 / 3.0) / (2.0 * math.pi)
    assert theta_c == pytest.approx(closed, rel=1e-6)
    assert theta_c == pytest.approx(0.083933, rel=5e-3)
    assert critical_temperature(8.0, 1.0) == pytest.approx(4.0 * theta_c, rel=1e-8)
    with pytest.raises(ConfigurationError):
        critical_temperature(0.0)


def test_condensate_fraction():
    theta_c = critical_temperature(1.0, 1.0)
    assert condensate_fraction(0.0, 1.0, theta_c=theta_c).c == 1.0
    assert condensate_fraction(theta_c, 1.0, theta_c=theta_c).c == 0.0
    assert condensate_fraction(2.0 * theta_c, 1.0, theta_c=theta_c).c == 0.0
    quarter = condensate_fraction(theta_c / 4.0, 1.0, theta_c=theta_c)
    assert quarter.fraction == pytest.approx(0.875)


def test_condensate_curve():
    rho, m = 1.0, 1.0
    theta_c = critical_temperature(rho, m)
    thetas = [theta_c * (i + 1) / 16 for i in range(16)]
    curve = condensate_curve(thetas, rho, m)

    expected = rho * (1.0 - (np.asarray(thetas) / theta_c) ** 1.5)
    np.testing.assert_allclose(curve["c"] / rho, expected / rho, atol=1e-6)
    np.testing.assert_allclose(curve["rho_check"], rho, rtol=1e-6)
    assert np.all(np.diff(curve["c"]) < 0)
    assert curve["c"][-1] == 0.0
