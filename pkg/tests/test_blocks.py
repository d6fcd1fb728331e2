import numpy as np
import pytest

from cmfd_cs.blocks import SV_FLOOR, block_features, log_inverse, svd_features, tile_blocks
from cmfd_cs.errors import ParameterError


def enumerate_origins(rows, cols, R):
    out = []
    for r in range(rows):
        for c in range(cols):
            if r + R <= rows and c + R <= cols:
                out.append((r, c))
    return out


@pytest.mark.parametrize(
    "size,R,expected", [(10, 4, 49), (4, 4, 1), (64, 8, len(enumerate_origins(64, 64, 8)))]
)
def test_block_counts(size, R, expected):
    grid = tile_blocks(np.zeros((size, size)), R)
    assert len(grid) == expected == (size - R + 1) ** 2


def test_row_major_origins(rng):
    band = rng.random((9, 12))
    grid = tile_blocks(band, 4)
    assert [tuple(o) for o in grid.origins] == enumerate_origins(9, 12, 4)
    k = grid.index(3, 5)
    np.testing.assert_array_equal(grid.blocks[k], band[3:7, 5:9])


@pytest.mark.parametrize("R", [3, 21])
def test_block_size_bounds(R):
    with pytest.raises(ParameterError):
        tile_blocks(np.zeros((40, 40)), R)


def test_block_larger_than_band():
    with pytest.raises(ParameterError):
        tile_blocks(np.zeros((6, 30)), 8)


def test_identity_block():
    grid = block_features(np.eye(4), 4)
    f = grid[0]
    np.testing.assert_allclose(f.sv, 1.0, atol=1e-12)
    assert f.svb == pytest.approx(0.0, abs=1e-12)


def test_rank_one_block(rng):
    u = rng.normal(size=4)
    v = rng.normal(size=4)
    u /= np.linalg.norm(u)
    v /= np.linalg.norm(v)
    grid = svd_features(tile_blocks(np.outer(u, v), 4))
    np.testing.assert_allclose(grid.sv[0], [1, 0, 0, 0], atol=1e-12)
    # zero singular values are floored before the logarithm
    np.testing.assert_allclose(grid.features[0][1:], -np.log(SV_FLOOR))


def test_random_5x5_against_gram_eigenvalues(rng):
    a = rng.normal(size=(5, 5))
    sv = svd_features(tile_blocks(a, 5, check_bounds=False)).sv[0]
    oracle = np.sqrt(np.clip(np.sort(np.linalg.eigvalsh(a.T @ a))[::-1], 0, None))
    np.testing.assert_allclose(sv, oracle, atol=1e-8)


def test_feature_invariants(rng):
    grid = block_features(rng.random((30, 30)), 6)
    assert np.all(np.diff(grid.sv, axis=1) <= 0)
    assert np.all(grid.sv >= 0)
    np.testing.assert_array_equal(grid.features, log_inverse(grid.sv))
    np.testing.assert_allclose(grid.svb, grid.features.sum(axis=1), atol=1e-9)
    frob = (grid.blocks**2).sum(axis=(1, 2))
    np.testing.assert_allclose((grid.sv**2).sum(axis=1), frob, rtol=1e-6)


def test_transpose_invariance(rng):
    band = rng.random((20, 20))
    a = block_features(band, 8).sv
    b = block_features(band.T, 8).sv
    # block (r, c) of the transposed band is the transpose of block (c, r)
    n = 20 - 8 + 1
    b = b.reshape(n, n, 8).transpose(1, 0, 2).reshape(-1, 8)
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_identical_blocks_identical_features(rng):
    band = rng.random((40, 40))
    band[25:35, 25:35] = band[2:12, 3:13]
    grid = block_features(band, 6)
    np.testing.assert_array_equal(grid.features[grid.index(2, 3)], grid.features[grid.index(25, 25)])


def test_reconstruction_within_tolerance(rng):
    grid = tile_blocks(rng.random((16, 16)), 5)
    for block in grid.blocks[::17]:
        u, s, vt = np.linalg.svd(block)
        err = np.linalg.norm(u @ np.diag(s) @ vt - block) / np.linalg.norm(block)
        assert err < 1e-8


def test_lexicographic_sort_reproducible(rng):
    band = rng.random((32, 32))
    f1 = block_features(band, 4).features
    f2 = block_features(band.copy(), 4).features
    np.testing.assert_array_equal(np.lexsort(f1.T[::-1]), np.lexsort(f2.T[::-1]))


def test_features_chunk_independent(rng):
    band = rng.random((30, 30))
    a = svd_features(tile_blocks(band, 5), chunk=7).features
    b = svd_features(tile_blocks(band, 5)).features
    np.testing.assert_array_equal(a, b)
