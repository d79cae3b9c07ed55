import numpy as np
import pytest

from src.core.exceptions import ContractViolation
from src.geometry.collision_geometry import SeverityCell
from src.risk.severity import KineticEnergySeverity, cell_weight, expected_severity


def _cell(*members):
    return SeverityCell(0.0, 1.0, frozenset(members))


def test_zero_energy():
    assert expected_severity(_cell((1, 1)), 0.0, (0.0, 0.0)) == 0.0


def test_kinetic_energy_matches_sampling():
    value = expected_severity(_cell((1, 1)), 10.0, (5.0, 2.0))
    assert value == pytest.approx(64.5)
    rng = np.random.default_rng(5)
    draws = rng.normal(5.0, 2.0, 1_000_000)
    assert value == pytest.approx(np.mean(0.5 * (10.0 ** 2 + draws ** 2)), rel=0.01)


def test_cell_weight_is_average_over_pairs():
    weights = np.array([[1.0, 3.0]])
    single = expected_severity(_cell((1, 1)), 10.0, (5.0, 2.0), weights=weights)
    mixed = expected_severity(_cell((1, 1), (1, 2)), 10.0, (5.0, 2.0), weights=weights)
    assert mixed == 2.0 * single


def test_weight_matrix_orientation():
    model = KineticEnergySeverity(pair_weights=np.array([[1.0, 2.0, 3.0]]))
    assert model.weight_matrix(1, 3, True).shape == (1, 3)
    assert model.weight_matrix(1, 3, False).shape == (3, 1)
    with pytest.raises(ContractViolation):
        model.weight_matrix(3, 3)


def test_negative_pair_weights_rejected():
    with pytest.raises(ContractViolation):
        KineticEnergySeverity(pair_weights=np.array([[1.0, -1.0]]))


def test_empty_cell_rejected():
    with pytest.raises(ContractViolation):
        cell_weight([], np.ones((1, 1)))


def test_weights_key_follows_orientation():
    model = KineticEnergySeverity(pair_weights=np.array([[1.0, 2.0, 3.0]]))
    assert model.weights_key() == ((1.0, 2.0, 3.0),)
    assert model.weights_key(False) == ((1.0,), (2.0,), (3.0,))
    assert KineticEnergySeverity().weights_key() is None


def test_pair_expectation_scales_with_weight():
    model = KineticEnergySeverity()
    assert model.pair_expectation(2.0, 10.0, 5.0, 2.0) == pytest.approx(2.0 * 64.5)
    weights = np.array([[2.0]])
    assert expected_severity(_cell((1, 1)), 10.0, (5.0, 2.0), weights=weights) == pytest.approx(129.0)
