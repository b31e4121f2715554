import doctest

import numpy as np
import pytest

import mlwalk.bignum
import mlwalk.cli
import mlwalk.model
import mlwalk.rng
from mlwalk.parallel import chunk_sizes, map_chunks
from mlwalk.rng import stream


def test_streams_reproducible_and_distinct():
    assert np.array_equal(stream(1, "a", 0).random(5), stream(1, "a", 0).random(5))
    assert not np.array_equal(stream(1, "a", 0).random(5), stream(1, "a", 1).random(5))
    assert not np.array_equal(stream(1, "a").random(5), stream(2, "a").random(5))


def test_stream_rejects_bad_ids():
    with pytest.raises(ValueError):
        stream(-1)
    with pytest.raises(ValueError):
        stream(1, -3)


def test_chunk_sizes():
    assert chunk_sizes(10, 4) == [4, 4, 2]
    assert chunk_sizes(8, 4) == [4, 4]
    assert chunk_sizes(0, 4) == []


def _draw(count, rng):
    return rng.random(count)


def test_map_chunks_worker_invariant():
    a = np.concatenate(map_chunks(_draw, 1000, 3, "t", 256, workers=1))
    b = np.concatenate(map_chunks(_draw, 1000, 3, "t", 256, workers=3))
    assert a.shape == (1000,) and np.array_equal(a, b)


@pytest.mark.parametrize("module", [mlwalk.rng, mlwalk.model, mlwalk.bignum, mlwalk.cli])
def test_doctests(module):
    result = doctest.testmod(module)
    assert result.failed == 0
