import numpy as np
import pytest

from ccs.channel import ChannelConfig, awgn_observe, check_power, ebn0_db, es_for_ebn0, user_energy


def test_ebn0_example():
    assert ebn0_db(1.0, 22517, 75) == pytest.approx(10 * np.log10(22517 / 150), abs=1e-12)
    assert ebn0_db(1.0, 22517, 75) == pytest.approx(21.764, abs=1e-3)


def test_ebn0_round_trip():
    for db in (-3.0, 0.0, 4.5, 12.0):
        assert ebn0_db(es_for_ebn0(db, 1800, 40), 1800, 40) == pytest.approx(db, abs=1e-12)


def test_ebn0_rejects_nonpositive():
    with pytest.raises(ValueError):
        ebn0_db(0.0, 100, 10)
    with pytest.raises(ValueError):
        es_for_ebn0(1.0, 100, 0)


def test_noise_variance():
    y = awgn_observe(np.zeros(100_000), 2.5, 3)
    assert abs(y.var() / 2.5 - 1) < 0.03
    assert abs(y.mean()) < 0.03


def test_noise_deterministic_and_zero_variance():
    x = np.arange(5.0)
    assert np.array_equal(awgn_observe(x, 1.0, 9), awgn_observe(x, 1.0, 9))
    assert np.array_equal(awgn_observe(x, 0.0, 9), x)
    with pytest.raises(ValueError):
        awgn_observe(x, -1.0, 0)


def test_channel_config():
    c = ChannelConfig(N=1800, n=6, B=40, Es=0.5)
    assert c.rows_per_slot == 300
    assert c.ebn0_db == pytest.approx(ebn0_db(0.5, 1800, 40))
    with pytest.raises(ValueError):
        ChannelConfig(N=1801, n=6, B=40, Es=1.0)
    with pytest.raises(ValueError):
        ChannelConfig(N=1800, n=6, B=40, Es=-1.0)


def test_power_check():
    x = np.ones(10)
    assert user_energy(x) == 10.0
    check_power(x, 10, 1.0)
    with pytest.raises(ValueError):
        check_power(x, 9, 1.0)
