import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinlab.lattice import Box
from spinlab.spin import (
    DeformationProfile,
    SpinConfig,
    apply_inhomogeneous_rotation,
    p12_project,
    random_unit_spin,
    read_snapshot_csv,
    rotate_plane,
    rotation_matrix,
    theta,
    write_snapshot_csv,
)


def test_spinconfig_validates_norms_and_dimension():
    box = Box(1, 1)
    with pytest.raises(ValueError):
        SpinConfig(box, 1, np.ones((3, 1)))
    with pytest.raises(ValueError):
        SpinConfig(box, 2, np.ones((3, 2)))
    with pytest.raises(ValueError):
        SpinConfig(box, 2, np.ones((4, 2)))


def test_mask_zeroes_absent_sites():
    box = Box(1, 1)
    cfg = SpinConfig.aligned(box, 2, mask=[False, True, True])
    assert np.all(cfg.values[0] == 0)
    np.testing.assert_allclose(cfg.magnetization(), [1.0, 0.0])


@pytest.mark.parametrize("x, expected", [((0, 0), math.pi), ((7, 0), math.pi / 2), ((9, 3), 0.0)])
def test_theta_examples(x, expected):
    assert theta(DeformationProfile(8, 4, 2), x) == pytest.approx(expected, abs=1e-15)


def test_theta_continuous_at_interior_edge():
    prof = DeformationProfile(10, 3, 1)
    assert prof.theta((10 - 3 + 1,)) == pytest.approx(math.pi, abs=1e-15)
    assert prof.theta((10,)) == pytest.approx(math.pi / 3)


def test_profile_rejects_bad_margin():
    with pytest.raises(ValueError):
        DeformationProfile(4, 4, 1)
    with pytest.raises(ValueError):
        DeformationProfile(4, 0, 1)


def test_profile_depends_on_shell_only_and_is_lipschitz():
    prof = DeformationProfile(7, 3, 2)
    box = Box(2, 9)
    th = prof.on_box(box)
    for r in range(10):
        vals = th[box.linf == r]
        assert np.ptp(vals) == 0.0
    assert th.min() >= 0 and th.max() <= math.pi
    shells = np.arange(0, 10)
    steps = np.abs(np.diff(prof.theta_of_shell(shells)))
    assert np.all(steps <= math.pi / 3 + 1e-15)


def test_rotation_matrix_group_law(rng):
    for _ in range(100):
        a, b = rng.uniform(-10, 10, size=2)
        R = rotation_matrix(a, 4)
        assert np.abs(R.T @ R - np.eye(4)).max() <= 1e-14
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-14)
        assert np.abs(R @ rotation_matrix(b, 4) - rotation_matrix(a + b, 4)).max() <= 1e-13
    Rpi = rotation_matrix(math.pi, 3)
    np.testing.assert_allclose(Rpi @ [1, 0, 0], [-1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(Rpi @ [0, 1, 0], [0, -1, 0], atol=1e-15)


@given(st.floats(-20, 20), st.integers(2, 5))
def test_rotate_plane_matches_matrix(angle, n):
    rng = np.random.default_rng(abs(hash((angle, n))) % 2**32)
    v = random_unit_spin(rng, n, size=5)
    expected = v @ rotation_matrix(angle, n).T
    np.testing.assert_allclose(rotate_plane(v, angle), expected, atol=1e-14)


def test_rotation_example_e1_quarter_turn():
    prof = DeformationProfile(8, 4, 2)
    box = Box(2, 8)
    cfg = SpinConfig.aligned(box, 3)
    out = apply_inhomogeneous_rotation(cfg, prof, +1)
    np.testing.assert_allclose(out.spin((7, 0)), [0.0, -1.0, 0.0], atol=1e-15)


def test_inhomogeneous_rotation_properties(rng):
    prof = DeformationProfile(5, 2, 2)
    box = Box(2, 7)
    cfg = SpinConfig.uniform(box, 3, rng)
    plus = apply_inhomogeneous_rotation(cfg, prof, +1)
    back = apply_inhomogeneous_rotation(plus, prof, -1)
    np.testing.assert_allclose(back.values, cfg.values, atol=1e-14)
    outside = box.linf > 5
    np.testing.assert_array_equal(plus.values[outside], cfg.values[outside])
    inside = box.linf <= 3
    np.testing.assert_allclose(plus.values[inside, :2], -cfg.values[inside, :2], atol=1e-14)
    np.testing.assert_array_equal(plus.values[:, 2], cfg.values[:, 2])
    e3 = SpinConfig(box, 3, np.tile([0.0, 0.0, 1.0], (len(box), 1)))
    np.testing.assert_array_equal(apply_inhomogeneous_rotation(e3, prof, -1).values, e3.values)


def test_inhomogeneous_rotation_needs_room():
    with pytest.raises(ValueError):
        apply_inhomogeneous_rotation(SpinConfig.aligned(Box(1, 3), 2), DeformationProfile(4, 1, 1))


def test_p12_project_examples():
    np.testing.assert_array_equal(p12_project([1.0, 0, 0]), [1, 0, 0])
    np.testing.assert_array_equal(p12_project([0, 0, 1.0]), [0, 0, 0])
    np.testing.assert_array_equal(p12_project([0.6, 0, 0.8]), [0.6, 0, 0])


def test_random_unit_spin_moments():
    rng = np.random.default_rng(5)
    n = 3
    v = random_unit_spin(rng, n, size=10**6)
    assert np.abs(np.linalg.norm(v, axis=1) - 1).max() <= 1e-12
    assert np.linalg.norm(v.mean(axis=0)) <= 5e-3
    cov = v.T @ v / len(v)
    assert np.abs(cov - np.eye(n) / n).max() <= 5e-3


def test_rotation_preserves_uniform_law():
    rng = np.random.default_rng(9)
    prof = DeformationProfile(3, 1, 1)
    box = Box(1, 4)
    samples = np.stack([SpinConfig.uniform(box, 2, rng).values for _ in range(20000)])
    rotated = rotate_plane(samples, prof.on_box(box))
    # per-site first and second moments stay those of the uniform law
    se = 1 / math.sqrt(len(samples))
    assert np.abs(rotated.mean(axis=0)).max() <= 5 * se
    assert np.abs((rotated**2).mean(axis=0) - 0.5).max() <= 5 * se


def test_renormalize_removes_drift(rng):
    cfg = SpinConfig.uniform(Box(1, 5), 3, rng)
    cfg.values *= 1 + 1e-9
    cfg.renormalize()
    assert np.abs(np.linalg.norm(cfg.values, axis=1) - 1).max() <= 1e-15


def test_snapshot_csv_roundtrip(tmp_path, rng):
    box = Box(2, 3)
    mask = rng.random(len(box)) < 0.8
    cfg = SpinConfig.uniform(box, 3, rng, mask=mask)
    path = tmp_path / "snap.csv"
    write_snapshot_csv(path, cfg, seed=42)
    assert path.read_text().startswith("# spinlab-config v1 d=2 n=3 M=3 seed=42")
    back, seed = read_snapshot_csv(path)
    assert seed == 42
    np.testing.assert_array_equal(back.values, cfg.values)
    np.testing.assert_array_equal(back.mask, cfg.mask)
