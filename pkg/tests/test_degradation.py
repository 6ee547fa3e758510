import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ngmeet.cube import DimensionError, HsiCube
from ngmeet.degradation import (
    CassiOp,
    IdentityOp,
    latent_update_cs,
    latent_update_denoise,
    latent_update_inpaint,
    make_cassi,
    make_hadamard_cs,
    make_mask,
    operator_from_dict,
)
from ngmeet.numerics import adjoint_mismatch


def all_ops(M=5, N=6, B=4, seed=0):
    return [
        IdentityOp((M, N, B)),
        make_mask(M, N, B, 0.3, seed),
        make_hadamard_cs(M, N, B, 0.4, seed),
        make_cassi(M, N, B, 0.5, seed),
    ]


@pytest.mark.parametrize("idx", range(4))
def test_adjoint_random_pairs(rng, idx):
    op = all_ops()[idx]
    lm = op.as_linear_map()
    worst = 0.0
    for _ in range(1000):
        x = rng.standard_normal(lm.in_dim)
        y = rng.standard_normal(lm.out_dim)
        worst = max(worst, adjoint_mismatch(lm, x, y))
    assert worst <= 1e-8


@given(
    seed=st.integers(0, 2**31 - 1),
    M=st.integers(1, 7),
    N=st.integers(1, 7),
    B=st.integers(1, 6),
    sr=st.floats(0.05, 1.0),
)
def test_property_adjoint_all_operators(seed, M, N, B, sr):
    rng = np.random.default_rng(seed)
    for op in (IdentityOp((M, N, B)), make_mask(M, N, B, sr, seed), make_hadamard_cs(M, N, B, sr, seed), make_cassi(M, N, B, sr, seed)):
        lm = op.as_linear_map()
        x, y = rng.standard_normal(lm.in_dim), rng.standard_normal(lm.out_dim)
        lhs = np.dot(lm.apply(x), y)
        rhs = np.dot(x, lm.adjoint(y))
        assert abs(lhs - rhs) <= 1e-8 * max(np.linalg.norm(lm.apply(x)) * np.linalg.norm(y), 1e-300)


def test_mask_full_is_identity(rng):
    op = make_mask(3, 4, 5, 1.0, 7)
    x = rng.standard_normal(op.cube_shape)
    np.testing.assert_array_equal(op.apply(x), x)


def test_mask_count_large_cube():
    op = make_mask(200, 200, 80, 0.05, 1)
    assert int(op.mask.sum()) == 160000


def test_mask_determinism_and_range():
    a, b = make_mask(6, 6, 6, 0.2, 3), make_mask(6, 6, 6, 0.2, 3)
    assert np.array_equal(a.mask, b.mask)
    assert not np.array_equal(a.mask, make_mask(6, 6, 6, 0.2, 4).mask)
    for sr in (0.0, 1.5):
        with pytest.raises(ValueError):
            make_mask(2, 2, 2, sr)


def test_hadamard_full_sampling_norm_preserving(rng):
    op = make_hadamard_cs(4, 4, 4, 1.0, 2)  # 64 = power of two
    x = rng.standard_normal(op.cube_shape)
    assert np.linalg.norm(op.apply(x)) == pytest.approx(np.linalg.norm(x), rel=1e-12)


@pytest.mark.parametrize("shape", [(4, 4, 4), (5, 6, 7), (3, 3, 31)])
def test_hadamard_rows_orthonormal(rng, shape):
    op = make_hadamard_cs(*shape, 0.3, 5)
    for _ in range(5):
        y = rng.standard_normal(op.n_meas)
        np.testing.assert_allclose(op.apply(op.adjoint(y)), y, atol=1e-8 * np.linalg.norm(y))
        x = rng.standard_normal(op.cube_shape)
        assert np.linalg.norm(op.apply(x)) <= np.linalg.norm(x) * (1 + 1e-12)


def test_hadamard_matches_dense_construction(rng):
    op = make_hadamard_cs(2, 3, 2, 0.5, 11)  # L = 12 = 8 + 4
    L = 12
    H = np.zeros((L, L))
    from test_numerics import dense_hadamard

    H[:8, :8] = dense_hadamard(8)
    H[8:, 8:] = dense_hadamard(4)
    P1 = np.eye(L)[op.perm1]
    P2 = np.eye(L)[op.perm2]
    S = np.eye(L)[: op.n_meas]
    Hd = S @ P2 @ H @ P1
    x = rng.standard_normal(op.cube_shape)
    np.testing.assert_allclose(op.apply(x), Hd @ x.ravel(), atol=1e-13)


def test_hadamard_sees_constant_cube():
    op = make_hadamard_cs(5, 5, 5, 0.05, 0)
    assert np.linalg.norm(op.apply(np.ones(op.cube_shape))) > 0


def test_hadamard_measurement_count():
    op = make_hadamard_cs(8, 8, 4, 0.1, 0)
    assert op.n_meas == int(np.floor(0.1 * 256))
    with pytest.raises(DimensionError):
        op.adjoint(np.zeros(op.n_meas + 1))


def test_cassi_single_band_is_mask_multiply(rng):
    op = make_cassi(4, 5, 1, 0.5, 3)
    x = rng.standard_normal(op.cube_shape)
    np.testing.assert_array_equal(op.apply(x), x[0] * op.mask)


def test_cassi_single_voxel_trace():
    op = CassiOp(np.ones((4, 5)), 3)
    x = np.zeros(op.cube_shape)
    x[2, 1, 3] = 7.0  # band 2, row 1, col 3
    y = op.apply(x)
    assert y.shape == (4, 5 + 3 - 1)
    assert y[1, 3 + 2] == 7.0
    assert np.count_nonzero(y) == 1


def test_cassi_measurement_shape_check():
    op = make_cassi(3, 3, 2)
    with pytest.raises(DimensionError):
        op.adjoint(np.zeros((3, 3)))


def test_operator_dimension_check():
    with pytest.raises(DimensionError):
        IdentityOp((2, 2, 2)).apply(np.zeros((2, 2, 3)))


def test_latent_denoise_examples(rng):
    y = HsiCube(rng.standard_normal((2, 3, 3)))
    l = HsiCube(rng.standard_normal((2, 3, 3)))
    np.testing.assert_allclose(latent_update_denoise(y, l, 2.0).data, (y.data + 2 * l.data) / 3)
    np.testing.assert_array_equal(latent_update_denoise(y, l, 0.0).data, y.data)
    np.testing.assert_allclose(latent_update_denoise(y, y, 2.0).data, y.data)
    with pytest.raises(DimensionError):
        latent_update_denoise(y, HsiCube(np.zeros((1, 3, 3))), 1.0)


def test_latent_inpaint_examples(rng):
    y = HsiCube(rng.standard_normal((2, 4, 4)))
    l = HsiCube(rng.standard_normal((2, 4, 4)))
    full = make_mask(4, 4, 2, 1.0)
    np.testing.assert_array_equal(latent_update_inpaint(y, l, full).data, y.data)
    empty = make_mask(4, 4, 2, 1.0)
    empty.mask[:] = False
    np.testing.assert_array_equal(latent_update_inpaint(y, l, empty).data, l.data)
    op = make_mask(4, 4, 2, 0.4, 9)
    out = latent_update_inpaint(y, l, op).data
    for idx in np.ndindex(out.shape):
        assert out[idx] == (y.data[idx] if op.mask[idx] else l.data[idx])


def test_latent_cs_identity_reduces_to_denoise(rng):
    y = HsiCube(rng.standard_normal((3, 4, 4)))
    l = HsiCube(rng.standard_normal((3, 4, 4)))
    z, res = latent_update_cs(y.data, l, IdentityOp(y.shape), 2.0, cg_tol=1e-12)
    np.testing.assert_allclose(z.data, latent_update_denoise(y, l, 2.0).data, atol=1e-10)
    assert res.converged


def test_latent_cs_mask_closed_form(rng):
    op = make_mask(4, 4, 3, 0.5, 1)
    y = op.apply(rng.standard_normal(op.cube_shape))
    l = HsiCube(rng.standard_normal(op.cube_shape))
    mu = 0.7
    z, _ = latent_update_cs(y, l, op, mu, cg_tol=1e-12)
    expected = np.where(op.mask, (y + mu * l.data) / (1 + mu), l.data)
    np.testing.assert_allclose(z.data, expected, atol=1e-10)


def test_latent_cs_hadamard_full_sampling_closed_form(rng):
    op = make_hadamard_cs(4, 4, 2, 1.0, 3)
    y = rng.standard_normal(op.n_meas)
    l = HsiCube(rng.standard_normal(op.cube_shape))
    z, _ = latent_update_cs(y, l, op, 2.0, cg_tol=1e-12)
    np.testing.assert_allclose(z.data, (op.adjoint(y) + 2.0 * l.data) / 3.0, atol=1e-10)


@pytest.mark.parametrize("make", [lambda: make_hadamard_cs(6, 6, 8, 0.1, 2), lambda: make_cassi(6, 6, 8, 0.5, 2)])
@pytest.mark.parametrize("precondition", [False, True])
def test_latent_cs_residual_within_tolerance(rng, make, precondition):
    op = make()
    y = rng.standard_normal(op.measurement_shape)
    l = HsiCube(rng.standard_normal(op.cube_shape))
    z, res = latent_update_cs(y, l, op, 2.0, cg_tol=1e-6, precondition=precondition)
    rhs = op.adjoint(y) + 2.0 * l.data
    resid = np.linalg.norm(op.normal(z.data) + 2.0 * z.data - rhs)
    assert resid <= 1e-6 * np.linalg.norm(rhs)
    assert res.converged


def test_latent_cs_requires_positive_mu(rng):
    op = IdentityOp((2, 2, 2))
    with pytest.raises(ValueError):
        latent_update_cs(np.zeros(op.cube_shape), HsiCube(np.zeros(op.cube_shape)), op, 0.0)


def test_latent_updates_stay_between_inputs(rng):
    y = HsiCube(rng.standard_normal((2, 5, 5)))
    l = HsiCube(rng.standard_normal((2, 5, 5)))
    lo, hi = np.minimum(y.data, l.data), np.maximum(y.data, l.data)
    for out in (latent_update_denoise(y, l, 2.0).data, latent_update_inpaint(y, l, make_mask(5, 5, 2, 0.5)).data):
        assert np.all(out >= lo - 1e-12) and np.all(out <= hi + 1e-12)


def test_operator_round_trip_through_description():
    for op in all_ops()[::2] + [all_ops()[3]]:
        back = operator_from_dict(op.describe())
        x = np.random.default_rng(1).standard_normal(op.cube_shape)
        np.testing.assert_array_equal(back.apply(x), op.apply(x))
    with pytest.raises(ValueError):
        operator_from_dict({"kind": "mask", "rows": 1, "cols": 1, "bands": 1})
    with pytest.raises(ValueError):
        operator_from_dict({"kind": "hadamard"})
