import numpy as np

from speckledic.seeding import derive_seed, rng_from


def test_same_path_same_seed():
    assert derive_seed(42, 1, 7) == derive_seed(42, 1, 7)


def test_different_paths_differ():
    seen = {derive_seed(42, *path) for path in [(1,), (2,), (1, 0), (1, 1), (2, 1)]}
    assert len(seen) == 5


def test_different_masters_differ():
    assert derive_seed(0, 3) != derive_seed(1, 3)


def test_rng_reproducible():
    a = rng_from(9, 4, 2).normal(size=8)
    b = rng_from(9, 4, 2).normal(size=8)
    np.testing.assert_array_equal(a, b)
