import numpy as np
import pytest

from _reference import scg_reference
from spa.errors import EmptySeedError, UsageError
from spa.fixtures import FixtureSpec, generate_fixture
from spa.scg import RowSet, ScgConfig, aggregate_rows, gather_rows, scg_map, seed_mask
from spa.selfcorr import FeatureGrid, hsc
from spa.tensor import BinaryMask, Map2D, minmax_normalize


def test_config_threshold_ordering():
    with pytest.raises(UsageError):
        ScgConfig(delta_h=0.3, delta_l=0.3)
    with pytest.raises(UsageError):
        ScgConfig(delta_h=0.2, delta_l=0.4)
    ScgConfig(delta_h=0.7, delta_l=0.1)


# ---------------------------------------------------------------------------
# seeds
# ---------------------------------------------------------------------------

def test_object_seed_strict_above():
    cam = Map2D(np.array([[0.1, 0.9]], dtype=np.float32))
    assert seed_mask(cam, 0.5).bits.tolist() == [[0, 1]]


def test_background_seed_strict_below():
    cam = Map2D(np.array([[0.1, 0.9]], dtype=np.float32))
    assert seed_mask(cam, 0.2, below=True).bits.tolist() == [[1, 0]]


def test_seed_boundary_excluded():
    cam = Map2D(np.full((2, 2), 0.5, dtype=np.float32))
    assert seed_mask(cam, 0.5).count == 0
    assert seed_mask(cam, 0.5, below=True).count == 0


# ---------------------------------------------------------------------------
# gather / aggregate
# ---------------------------------------------------------------------------

def test_gather_single_row(rng):
    g = FeatureGrid(rng.standard_normal((1, 3, 4)).astype(np.float32))
    mat = hsc(g)
    mask = BinaryMask(np.array([[1, 0, 0]], dtype=np.uint8))
    rows = gather_rows(mat, mask)
    assert rows.count == 1
    assert np.array_equal(rows.rows[0].reshape(-1), mat.entries[0])


def test_gather_full_mask(rng):
    g = FeatureGrid(rng.standard_normal((2, 2, 4)).astype(np.float32))
    mat = hsc(g)
    rows = gather_rows(mat, BinaryMask(np.ones((2, 2), dtype=np.uint8)))
    assert rows.count == 4


def test_gather_two_rows_index_by_index(rng):
    g = FeatureGrid(rng.standard_normal((3, 3, 5)).astype(np.float32))
    mat = hsc(g)
    mask = np.zeros((3, 3), dtype=np.uint8)
    mask[0, 2] = 1  # flat 2
    mask[2, 1] = 1  # flat 7
    rows = gather_rows(mat, BinaryMask(mask))
    assert rows.count == 2
    for out_row, flat_idx in zip(rows.rows, (2, 7)):
        for j in range(9):
            assert out_row[j // 3, j % 3] == mat.entries[flat_idx, j]


def test_gather_empty_seed_raises(rng):
    g = FeatureGrid(rng.standard_normal((2, 2, 3)).astype(np.float32))
    with pytest.raises(EmptySeedError):
        gather_rows(hsc(g), BinaryMask(np.zeros((2, 2), dtype=np.uint8)))


def test_aggregate_single_row_identity(rng):
    rows = RowSet(rng.random((1, 2, 3)))
    assert np.array_equal(aggregate_rows(rows).values, rows.rows[0].astype(np.float32))


def test_aggregate_mean_of_extremes():
    rows = RowSet(np.stack([np.zeros((2, 2)), np.ones((2, 2))]))
    assert np.allclose(aggregate_rows(rows).values, 0.5)


def test_aggregate_matches_reference_sum(rng):
    rows = RowSet(rng.random((7, 4, 5)))
    ref = np.zeros((4, 5), dtype=np.float64)
    for r in rows.rows:
        ref += r
    ref /= 7.0
    assert np.abs(aggregate_rows(rows).values - ref).max() < 1e-7


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

def orthogonal_scene():
    """3x3 grid: object pixels point along e0, background along e1; the cam
    has one confident object pixel and one confident background pixel."""
    obj = np.zeros((3, 3), dtype=bool)
    obj[0:2, 0:2] = True
    feats = np.where(obj[:, :, None], [1.0, 0.0], [0.0, 1.0]).astype(np.float32)
    cam = np.full((3, 3), 0.5, dtype=np.float32)
    cam[0, 0] = 0.9
    cam[2, 2] = 0.05
    return FeatureGrid(feats), Map2D(cam), obj


def test_orthogonal_clusters_exact_indicator():
    grid, cam, obj = orthogonal_scene()
    result = scg_map(grid, cam, ScgConfig(delta_h=0.7, delta_l=0.1))
    assert not result.fallback_to_cam
    assert np.array_equal(result.map.values, obj.astype(np.float32))


def test_identical_features_zero_map():
    feats = np.ones((2, 3, 4), dtype=np.float32)
    cam = np.full((2, 3), 0.5, dtype=np.float32)
    cam[0, 0] = 0.9
    cam[1, 2] = 0.05
    result = scg_map(FeatureGrid(feats), Map2D(cam), ScgConfig())
    assert np.array_equal(result.map.values, np.zeros((2, 3), dtype=np.float32))


def test_empty_object_seed_falls_back_to_cam():
    grid, _, _ = orthogonal_scene()
    cam = Map2D(np.full((3, 3), 0.5, dtype=np.float32))  # constant -> normalizes to 0
    result = scg_map(grid, cam, ScgConfig())
    assert result.fallback_to_cam
    assert np.array_equal(result.map.values, minmax_normalize(cam).values)


def test_normalization_pins_a_background_seed():
    # normalize-first guarantees a zero-valued pixel on any non-constant
    # map, so the background seed is never empty through the pipeline
    grid, cam, _ = orthogonal_scene()
    lifted = Map2D(np.clip(cam.values, 0.4, 1.0))  # raw values all above delta_l
    result = scg_map(grid, lifted, ScgConfig(delta_h=0.7, delta_l=0.1))
    assert result.background_seed_count >= 1


def test_empty_background_seed_component_semantics():
    # the degraded form subtracts nothing: output equals the object aggregate
    grid, cam, obj = orthogonal_scene()
    mat = hsc(grid, (1, 2))
    cam_n = minmax_normalize(cam)
    obj_map = aggregate_rows(gather_rows(mat, seed_mask(cam_n, 0.7))).values
    out = np.maximum(obj_map - np.zeros_like(obj_map), 0.0)
    assert np.array_equal(out, obj_map)
    assert np.array_equal(out, obj.astype(np.float32))


def test_monotone_seed_growth_orthogonal():
    grid, cam, _ = orthogonal_scene()
    one_seed = scg_map(grid, cam, ScgConfig()).map.values
    cam2 = cam.values.copy()
    cam2[0, 1] = 0.95  # second confident object pixel
    two_seed = scg_map(grid, Map2D(cam2), ScgConfig()).map.values
    assert np.array_equal(one_seed, two_seed)


def test_pipeline_deterministic():
    fix = generate_fixture(FixtureSpec(noise=0.05, seed=11))
    a = scg_map(fix.features, fix.cam, ScgConfig()).map.values
    b = scg_map(fix.features, fix.cam, ScgConfig()).map.values
    assert a.tobytes() == b.tobytes()


def test_output_zero_where_background_dominates(rng):
    fix = generate_fixture(FixtureSpec(noise=0.1, seed=5))
    res = scg_map(fix.features, fix.cam, ScgConfig())
    assert res.map.values.min() >= 0.0 and res.map.values.max() <= 1.0


def test_three_cluster_fixture_matches_reference():
    # planted scene with three feature directions and mild noise
    rng = np.random.default_rng(77)
    h = w = 4
    labels = np.zeros((h, w), dtype=int)
    labels[0:2, 0:2] = 0
    labels[0:2, 2:4] = 1
    labels[2:4, :] = 2
    dirs = np.array([
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
    ])
    feats = dirs[labels] + 0.05 * rng.standard_normal((h, w, 6))
    cam = np.full((h, w), 0.5)
    cam[0, 0] = 0.9   # seed inside cluster 0
    cam[3, 3] = 0.05  # background seed inside cluster 2
    cfg = ScgConfig(delta_h=0.7, delta_l=0.1)
    fast = scg_map(FeatureGrid(feats.astype(np.float32)), Map2D(cam.astype(np.float32)), cfg)
    ref = scg_reference(feats.astype(np.float32).astype(np.float64), cam, 0.7, 0.1)
    assert np.abs(fast.map.values.astype(np.float64) - ref).max() < 1e-5


def test_multi_layer_inputs_fuse(rng):
    fix = generate_fixture(FixtureSpec(noise=0.05, seed=21))
    res = scg_map([fix.features, fix.features], fix.cam, ScgConfig())
    assert res.map.values.min() >= 0.0 and res.map.values.max() <= 1.0
    assert not res.fallback_to_cam
