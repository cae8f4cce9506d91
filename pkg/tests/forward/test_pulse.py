import numpy
import pytest

from src.core.errors import DomainError, ValidationError
from src.forward.pulse import PulseSpec, impulseTrain, pulseValue

SPEC: PulseSpec = PulseSpec(t0=1e-12, width=0.25e-12)


def test_zero_at_the_center() -> None:
    assert pulseValue(SPEC, 1e-12) == 0.0


def test_value_at_time_zero() -> None:
    assert pulseValue(SPEC, 0.0) == pytest.approx(
        1e-12 * numpy.exp(-8.0), rel=1e-12
    )
    assert pulseValue(SPEC, 0.0) == pytest.approx(3.3546e-16, rel=1e-4)


def test_odd_symmetry_about_the_center() -> None:
    deltas = numpy.linspace(0.01e-12, 0.9e-12, 17)
    assert numpy.allclose(
        pulseValue(SPEC, 1e-12 + deltas),
        -pulseValue(SPEC, 1e-12 - deltas),
        rtol=1e-9,
        atol=0,
    )


def test_negative_times_are_silent() -> None:
    values = pulseValue(SPEC, numpy.array([-1e-12, -1e-15, 0.5e-12]))
    assert values[0] == 0.0 and values[1] == 0.0
    assert values[2] > 0


def test_pulse_parameters_are_validated() -> None:
    with pytest.raises(ValidationError):
        PulseSpec(t0=0.0)
    with pytest.raises(ValidationError):
        PulseSpec(width=-1.0)


def test_impulse_train_coefficients() -> None:
    train = impulseTrain(rho=0.5, tauRho=1e-12, nReflections=2)

    assert train[0] == (0.0, 1.0)
    assert train[1][0] == pytest.approx(2e-12)
    assert train[1][1] == pytest.approx(-0.75)
    assert train[2][0] == pytest.approx(4e-12)
    assert train[2][1] == pytest.approx(-0.1875)


def test_impulse_train_decays_geometrically() -> None:
    rho: float = 0.3
    train = impulseTrain(rho=rho, tauRho=5e-13, nReflections=6)
    coefficients = numpy.abs([c for _, c in train[1:]])

    assert numpy.allclose(coefficients[1:] / coefficients[:-1], rho**2)
    assert train[0] == (0.0, 1.0)


@pytest.mark.parametrize("rho", [0.0, 1.0, -0.2, 1.5])
def test_impulse_train_rejects_reflectance(rho: float) -> None:
    with pytest.raises(DomainError) as error:
        impulseTrain(rho=rho, tauRho=1e-12, nReflections=3)
    assert error.value.field == "rho"
