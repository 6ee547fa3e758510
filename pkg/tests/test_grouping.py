import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ngmeet.cube import DimensionError, HsiCube
from ngmeet.grouping import (
    PatchGeometry,
    PatchGroupSet,
    aggregate_groups,
    gather_all,
    gather_group,
    match_groups,
    tile_references,
)


def brute_force_groups(data, geom):
    """Exhaustive k-NN: distance sort with raster tie-breaks, reference first."""
    K, M, N = data.shape
    n, w = geom.patch_size, geom.search_radius
    refs = tile_references(M, N, geom)
    out = []
    for r, c in refs:
        ref = data[:, r : r + n, c : c + n]
        cands = []
        for rr in range(max(0, r - w), min(M - n, r + w) + 1):
            for cc in range(max(0, c - w), min(N - n, c + w) + 1):
                d = np.sum((data[:, rr : rr + n, cc : cc + n] - ref) ** 2)
                is_ref = (rr, cc) == (r, c)
                cands.append((0 if is_ref else 1, d, rr, cc))
        cands.sort()
        out.append([(rr, cc) for _, _, rr, cc in cands])
    return refs, out


def test_tile_references_regular_grid():
    refs = tile_references(8, 8, PatchGeometry(patch_size=4, stride=4))
    assert sorted(map(tuple, refs)) == [(0, 0), (0, 4), (4, 0), (4, 4)]


def test_tile_references_includes_last_position():
    refs = tile_references(9, 4, PatchGeometry(patch_size=4, stride=4))
    assert sorted(set(refs[:, 0])) == [0, 4, 5]


def test_tile_references_patch_too_large():
    with pytest.raises(ValueError):
        tile_references(3, 8, PatchGeometry(patch_size=4))


@given(M=st.integers(1, 30), N=st.integers(1, 30), n=st.integers(1, 8), s=st.integers(1, 9))
def test_property_tiling_covers_every_pixel(M, N, n, s):
    if n > min(M, N):
        return
    geom = PatchGeometry(patch_size=n, stride=s)
    cover = np.zeros((M, N), dtype=int)
    for r, c in tile_references(M, N, geom):
        cover[r : r + n, c : c + n] += 1
    assert cover.min() >= 1


def test_geometry_group_size_by_noise():
    assert PatchGeometry.for_noise_level(50).group_size == 70
    assert PatchGeometry.for_noise_level(30).group_size == 60
    assert PatchGeometry.for_noise_level(10).group_size == 50
    assert PatchGeometry.for_noise_level(60, group_size=9).group_size == 9
    with pytest.raises(ValueError):
        PatchGeometry(patch_size=0)


def test_match_identical_quadrants_finds_duplicates_first(rng):
    q = rng.standard_normal((1, 4, 4))
    img = np.block([[q, q], [q, q]])
    geom = PatchGeometry(patch_size=4, stride=4, search_radius=8, group_size=6)
    gs = match_groups(HsiCube(img), geom)
    for j in range(gs.num_groups):
        positions = {tuple(p) for p in gs.groups[j, :4]}
        assert positions == {(0, 0), (0, 4), (4, 0), (4, 4)}
        assert tuple(gs.groups[j, 0]) == tuple(gs.references[j])


def test_match_group_size_one_is_reference(rng):
    gs = match_groups(HsiCube(rng.standard_normal((2, 10, 10))), PatchGeometry(patch_size=3, stride=2, group_size=1))
    np.testing.assert_array_equal(gs.groups[:, 0], gs.references)
    assert gs.group_size == 1


def test_match_clamps_group_size_to_window(rng):
    gs = match_groups(HsiCube(rng.standard_normal((1, 6, 6))), PatchGeometry(patch_size=4, stride=1, search_radius=1, group_size=50))
    assert gs.group_size == 4  # corner references see a 2x2 window


@pytest.mark.parametrize("size,w,n,p,K", [(12, 3, 3, 8, 2), (16, 4, 4, 10, 1), (16, 20, 5, 20, 3), (9, 2, 2, 5, 2)])
def test_match_equals_brute_force(rng, size, w, n, p, K):
    data = rng.standard_normal((K, size, size))
    data[:, ::3] = data[:, :1]  # force equal-distance ties
    geom = PatchGeometry(patch_size=n, stride=2, search_radius=w, group_size=p)
    gs = match_groups(HsiCube(data), geom)
    refs, expected = brute_force_groups(data, geom)
    np.testing.assert_array_equal(gs.references, refs)
    for j in range(gs.num_groups):
        assert [tuple(x) for x in gs.groups[j]] == expected[j][: gs.group_size]


def test_group_distances_non_decreasing(rng):
    data = rng.standard_normal((2, 16, 16))
    geom = PatchGeometry(patch_size=4, stride=3, search_radius=5, group_size=12)
    gs = match_groups(HsiCube(data), geom)
    G = gather_all(HsiCube(data), gs)
    d = np.sum((G - G[:, :, :1]) ** 2, axis=1)
    assert np.all(np.diff(d, axis=1) >= -1e-12)


def test_match_translation_consistent(rng):
    base = rng.standard_normal((2, 24, 24))
    geom = PatchGeometry(patch_size=4, stride=4, search_radius=2, group_size=7)
    gs_a = match_groups(HsiCube(base[:, :20, :20]), geom)
    gs_b = match_groups(HsiCube(base[:, 4:, 4:]), geom)
    ref_a = {tuple(r): j for j, r in enumerate(gs_a.references)}
    checked = 0
    for j, (r, c) in enumerate(gs_b.references):
        # windows that stay inside both crops see the same pixels
        if 2 <= r <= 10 and 2 <= c <= 10:
            k = ref_a[(r + 4, c + 4)]
            np.testing.assert_array_equal(gs_b.groups[j] + 4, gs_a.groups[k])
            checked += 1
    assert checked == 4


def test_match_shift_permutes_groups(rng):
    # a periodic image shifted by a full period gives the same groups up to the shift
    tile = rng.standard_normal((1, 8, 8))
    img = np.tile(tile, (1, 3, 3))
    geom = PatchGeometry(patch_size=4, stride=4, search_radius=30, group_size=9)
    gs = match_groups(HsiCube(img), geom)
    G = gather_all(HsiCube(img), gs)
    # every member of each group is an exact copy of its reference (9 periodic copies exist)
    assert np.allclose(G, G[:, :, :1])


def test_gather_single_pixels():
    m = HsiCube(np.arange(9.0).reshape(1, 3, 3))
    np.testing.assert_array_equal(gather_group(m, [(0, 0), (2, 1)], 1), [[0.0, 7.0]])


def test_gather_layout_spatial_then_spectral(rng):
    m = HsiCube(rng.standard_normal((3, 5, 5)))
    col = gather_group(m, [(1, 2)], 2)[:, 0]
    expected = [m.data[k, 1 + dr, 2 + dc] for dr in range(2) for dc in range(2) for k in range(3)]
    np.testing.assert_array_equal(col, expected)


def test_gather_shape_matches_cost_model(rng):
    m = HsiCube(rng.standard_normal((4, 12, 12)))
    gs = match_groups(m, PatchGeometry(patch_size=3, stride=3, search_radius=4, group_size=7))
    G = gather_group(m, gs.groups[0], 3)
    assert G.shape == (3 * 3 * 4, 7)
    np.testing.assert_array_equal(gather_all(m, gs)[0], G)


def test_gather_out_of_bounds(rng):
    with pytest.raises(DimensionError):
        gather_group(HsiCube(rng.standard_normal((1, 4, 4))), [(3, 0)], 2)


def test_aggregate_constant_single_group():
    gs = PatchGroupSet(np.array([[0, 0]]), np.array([[[0, 0]]]), 5)
    out = aggregate_groups(np.full((1, 25, 1), 4.5), gs, 5, 5, 1)
    np.testing.assert_array_equal(out.data, np.full((1, 5, 5), 4.5))


def test_aggregate_matches_loop_oracle(rng):
    M, N, K, n = 7, 6, 2, 3
    groups = rng.integers(0, [M - n + 1, N - n + 1], size=(6, 4, 2))
    groups[0, :, :] = [[0, 0], [0, 3], [4, 0], [4, 3]]  # cover every pixel
    gs = PatchGroupSet(groups[:, 0], groups, n)
    vals = rng.standard_normal((6, n * n * K, 4))
    acc = np.zeros((K, M, N))
    cnt = np.zeros((M, N))
    for j in range(6):
        for q in range(4):
            r, c = groups[j, q]
            patch = vals[j, :, q].reshape(n, n, K)
            for dr in range(n):
                for dc in range(n):
                    acc[:, r + dr, c + dc] += patch[dr, dc]
                    cnt[r + dr, c + dc] += 1
    out = aggregate_groups(vals, gs, M, N, K)
    np.testing.assert_allclose(out.data, acc / cnt, atol=1e-13)


def test_aggregate_shape_check(rng):
    gs = PatchGroupSet(np.array([[0, 0]]), np.array([[[0, 0]]]), 2)
    with pytest.raises(DimensionError):
        aggregate_groups(np.zeros((1, 3, 1)), gs, 2, 2, 1)


def test_aggregate_uncovered_pixel_asserts():
    gs = PatchGroupSet(np.array([[0, 0]]), np.array([[[0, 0]]]), 1)
    with pytest.raises(AssertionError):
        aggregate_groups(np.zeros((1, 1, 1)), gs, 2, 2, 1)


@given(
    seed=st.integers(0, 2**31 - 1),
    M=st.integers(4, 16),
    N=st.integers(4, 16),
    K=st.integers(1, 3),
    n=st.integers(1, 4),
    s=st.integers(1, 5),
    p=st.integers(1, 8),
    w=st.integers(0, 5),
)
def test_property_aggregation_idempotent(seed, M, N, K, n, s, p, w):
    m = HsiCube(np.random.default_rng(seed).standard_normal((K, M, N)))
    gs = match_groups(m, PatchGeometry(patch_size=n, stride=s, search_radius=w, group_size=p))
    out = aggregate_groups(gather_all(m, gs), gs, M, N, K)
    np.testing.assert_allclose(out.data, m.data, rtol=0, atol=1e-12)


def test_aggregation_independent_of_group_order(rng):
    m = HsiCube(rng.standard_normal((2, 12, 12)))
    gs = match_groups(m, PatchGeometry(patch_size=3, stride=2, search_radius=3, group_size=5))
    vals = rng.standard_normal(gather_all(m, gs).shape)
    a = aggregate_groups(vals, gs, 12, 12, 2)
    b = aggregate_groups(vals, gs, 12, 12, 2)
    assert np.array_equal(a.data, b.data)
