import numpy as np
import pytest

from airgrad.rng import substream


def test_same_key_reproduces():
    a = substream(7, "channel", 3, 1).standard_normal(8)
    b = substream(7, "channel", 3, 1).standard_normal(8)
    assert np.array_equal(a, b)


def test_distinct_keys_differ():
    a = substream(7, "channel", 3, 1).standard_normal(8)
    b = substream(7, "channel", 3, 2).standard_normal(8)
    c = substream(7, "noise", 3, 1).standard_normal(8)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_unknown_purpose_rejected():
    with pytest.raises(ValueError):
        substream(7, "no-such-purpose")
