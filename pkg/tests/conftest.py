import numpy as np
import pytest


def make_disk(shape, center, radius):
    yy, xx = np.mgrid[0 : shape[0], 0 : shape[1]]
    return (yy - center[0]) ** 2 + (xx - center[1]) ** 2 <= radius**2


def make_annulus(shape, center, r_outer, r_inner):
    d2 = _dist2(shape, center)
    return (d2 <= r_outer**2) & (d2 >= r_inner**2)


def _dist2(shape, center):
    yy, xx = np.mgrid[0 : shape[0], 0 : shape[1]]
    return (yy - center[0]) ** 2 + (xx - center[1]) ** 2


def chain_length_oracle(path):
    """Independent chain-code length: 1 per orthogonal step, sqrt(2) per diagonal."""
    total = 0.0
    for (r0, c0), (r1, c1) in zip(path[:-1], path[1:]):
        dr, dc = abs(int(r1) - int(r0)), abs(int(c1) - int(c0))
        assert max(dr, dc) == 1, "path must be 8-connected"
        total += 2**0.5 if dr == 1 and dc == 1 else 1.0
    return total


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
