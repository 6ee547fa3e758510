import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ngmeet.cube import DimensionError, HsiCube, fold_mode3, frobenius_norm, mode3_product, unfold_mode3

from conftest import random_cube


def test_unfold_degenerate_two_band_pixel():
    a, b = 1.5, -2.0
    cube = HsiCube(np.array([a, b]).reshape(2, 1, 1))
    np.testing.assert_array_equal(unfold_mode3(cube), [[a], [b]])


def test_unfold_single_band_is_row_major():
    data = np.array([[1.0, 2.0], [3.0, 4.0]])
    cube = HsiCube(data[None])
    np.testing.assert_array_equal(unfold_mode3(cube), [[1.0, 2.0, 3.0, 4.0]])


def test_unfold_row_is_band_flattened(rng):
    cube = random_cube(rng, 3, 4, 5)
    X3 = unfold_mode3(cube)
    for b in range(5):
        np.testing.assert_array_equal(X3[b], cube.data[b].ravel())


def test_fold_unfold_round_trip_bit_exact(rng):
    for shape in [(3, 4, 5), (4, 3, 6)]:
        cube = random_cube(rng, *shape)
        back = fold_mode3(unfold_mode3(cube), cube.rows, cube.cols)
        assert np.array_equal(back.data, cube.data)


def test_fold_small_matrix():
    cube = fold_mode3(np.array([[7.0], [8.0]]), 1, 1)
    assert cube.shape == (1, 1, 2)
    assert cube.data[1, 0, 0] == 8.0


def test_fold_dimension_mismatch():
    with pytest.raises(DimensionError):
        fold_mode3(np.zeros((2, 5)), 2, 3)


def test_from_mnb_layout(rng):
    arr = rng.standard_normal((3, 4, 5))
    cube = HsiCube.from_mnb(arr)
    assert cube.shape == (3, 4, 5)
    np.testing.assert_array_equal(cube.data[2], arr[:, :, 2])
    np.testing.assert_array_equal(cube.to_mnb(), arr)


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        HsiCube(np.array([[[np.nan]]]))


def test_mode3_identity_passthrough(rng):
    cube = random_cube(rng, 3, 2, 4)
    out = mode3_product(cube, np.eye(4))
    assert np.array_equal(out.data, cube.data)


def test_mode3_ones_column_copies_band(rng):
    cube = random_cube(rng, 3, 3, 1)
    out = mode3_product(cube, np.ones((4, 1)))
    for b in range(4):
        np.testing.assert_array_equal(out.data[b], cube.data[0])


def test_mode3_matches_triple_loop(rng):
    x = rng.standard_normal((2, 2, 3))  # (M, N, K)
    A = rng.standard_normal((4, 3))
    expected = np.zeros((2, 2, 4))
    for i in range(2):
        for j in range(2):
            for l in range(4):
                expected[i, j, l] = sum(A[l, k] * x[i, j, k] for k in range(3))
    out = mode3_product(HsiCube.from_mnb(x), A)
    np.testing.assert_allclose(out.to_mnb(), expected, rtol=1e-13, atol=1e-13)


def test_mode3_transpose_flag(rng):
    cube = random_cube(rng, 2, 3, 4)
    A = rng.standard_normal((4, 2))
    np.testing.assert_allclose(mode3_product(cube, A, transpose=True).data, mode3_product(cube, A.T).data)


def test_mode3_dimension_mismatch(rng):
    with pytest.raises(DimensionError):
        mode3_product(random_cube(rng, 2, 2, 3), np.ones((2, 2)))


def test_frobenius_examples(rng):
    assert frobenius_norm(HsiCube(np.ones((2, 2, 2)))) == pytest.approx(np.sqrt(8.0), rel=1e-15)
    assert frobenius_norm(HsiCube(np.zeros((2, 2, 2)))) == 0.0
    cube = random_cube(rng, 3, 4, 5)
    total = 0.0
    for v in cube.data.ravel():
        total += v * v
    assert frobenius_norm(cube) == pytest.approx(np.sqrt(total), rel=1e-12)


dims = st.integers(min_value=1, max_value=6)


@given(M=dims, N=dims, B=dims, seed=st.integers(0, 2**31 - 1))
def test_property_round_trip(M, N, B, seed):
    cube = random_cube(np.random.default_rng(seed), M, N, B)
    assert np.array_equal(fold_mode3(unfold_mode3(cube), M, N).data, cube.data)


@given(M=dims, N=dims, B=st.integers(2, 8), seed=st.integers(0, 2**31 - 1))
def test_property_orthonormal_projection_non_expansive(M, N, B, seed):
    rng = np.random.default_rng(seed)
    cube = random_cube(rng, M, N, B)
    K = int(rng.integers(1, B + 1))
    A, _ = np.linalg.qr(rng.standard_normal((B, K)))
    assert frobenius_norm(mode3_product(cube, A, transpose=True)) <= frobenius_norm(cube) * (1 + 1e-12)


@given(M=dims, N=dims, B=dims, seed=st.integers(0, 2**31 - 1))
def test_property_associativity(M, N, B, seed):
    rng = np.random.default_rng(seed)
    cube = random_cube(rng, M, N, B)
    A = rng.standard_normal((4, B))
    C = rng.standard_normal((3, 4))
    lhs = mode3_product(mode3_product(cube, A), C).data
    rhs = mode3_product(cube, C @ A).data
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * max(np.linalg.norm(rhs), 1e-300)
