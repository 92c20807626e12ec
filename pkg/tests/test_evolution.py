import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from splatmpm.errors import DegenerateGradientError
from splatmpm.evolution import evolve, extract_rotation, rotate_sh, update_covariance
from splatmpm.linalg3 import polar3, svd3
from splatmpm.model import SH_C0, ParticleSet

C1 = 0.4886025119029199


def rand_rot(rng, n=None):
    return Rotation.random(n, random_state=int(rng.integers(1 << 31))).as_matrix()


def rand_spd(rng):
    B = rng.normal(size=(3, 3))
    return B @ B.T + 0.1 * np.eye(3)


def sh_color(sh, d):
    """Band 0-1 radiance in direction d (3DGS convention)."""
    x, y, z = d
    return SH_C0 * sh[0] + C1 * (-y * sh[1] + z * sh[2] - x * sh[3]) + 0.5


# ------------------------------------------------------------------ linalg


def test_svd3_reconstructs():
    rng = np.random.default_rng(0)
    for _ in range(500):
        F = rng.normal(size=(3, 3))
        U, s, V = svd3(F)
        assert np.allclose((U * s) @ V.T, F, atol=1e-12 * max(1, np.abs(F).max()))
        assert np.linalg.det(U) == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.det(V) == pytest.approx(1.0, abs=1e-12)
        assert s[0] >= s[1] >= abs(s[2])
        assert np.allclose(np.abs(s), np.linalg.svd(F, compute_uv=False), rtol=1e-10, atol=1e-13)


def test_svd3_repeated_values():
    for F in (np.eye(3), 2 * np.eye(3), np.diag([3.0, 3.0, 1.0]), np.zeros((3, 3))):
        U, s, V = svd3(F)
        assert np.allclose((U * s) @ V.T, F, atol=1e-14)


def test_polar3_is_rotation():
    rng = np.random.default_rng(1)
    F = rng.normal(size=(3, 3))
    if np.linalg.det(F) < 0:
        F[:, 0] *= -1
    R = polar3(F)
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)
    S = R.T @ F
    assert np.allclose(S, S.T, atol=1e-10)


# -------------------------------------------------------------- covariance


def test_covariance_examples():
    rng = np.random.default_rng(2)
    A = rand_spd(rng)
    assert np.allclose(update_covariance(A, np.eye(3)), A, atol=0)
    assert np.allclose(update_covariance(A, 2 * np.eye(3)), 4 * A, rtol=1e-15)
    for R in rand_rot(rng, 20):
        a = update_covariance(A, R)
        assert np.allclose(np.linalg.eigvalsh(a), np.linalg.eigvalsh(A), atol=1e-10)


def test_covariance_symmetric_and_composes():
    rng = np.random.default_rng(3)
    for _ in range(50):
        A = rand_spd(rng)
        F1, F2 = np.eye(3) + 0.3 * rng.normal(size=(2, 3, 3))
        a = update_covariance(A, F1)
        assert np.array_equal(a, a.T)
        two = update_covariance(a, F2)
        one = update_covariance(A, F2 @ F1)
        assert np.allclose(two, one, atol=1e-10 * np.abs(one).max())


# ---------------------------------------------------------------- rotation


def test_extract_rotation_examples():
    rng = np.random.default_rng(4)
    R = rand_rot(rng)
    assert np.allclose(extract_rotation(R), R, atol=1e-12)
    assert np.allclose(extract_rotation(np.diag([2.0, 1.0, 1.0])), np.eye(3), atol=1e-14)
    for _ in range(100):
        F = np.eye(3) + 0.4 * rng.normal(size=(3, 3))
        if np.linalg.det(F) <= 0:
            continue
        R = extract_rotation(F)
        assert np.linalg.norm(R.T @ R - np.eye(3)) < 1e-10
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
        S = R.T @ F
        assert np.abs(S - S.T).max() < 1e-9


def test_extract_rotation_degenerate():
    with pytest.raises(DegenerateGradientError):
        extract_rotation(np.diag([1.0, 0.0, 1.0]))
    with pytest.raises(DegenerateGradientError):
        extract_rotation(np.stack([np.eye(3), np.diag([1.0, 1.0, -1.0])]))


# ---------------------------------------------------------------------- SH


def test_rotate_sh_identity_and_band0():
    rng = np.random.default_rng(5)
    sh = rng.normal(size=(9, 3))
    assert np.array_equal(rotate_sh(sh, np.eye(3)), sh)
    sh0 = rng.normal(size=(1, 3))
    assert np.array_equal(rotate_sh(sh0, rand_rot(rng)), sh0)


def test_rotate_sh_band2_untouched():
    rng = np.random.default_rng(6)
    sh = rng.normal(size=(9, 3))
    out = rotate_sh(sh, rand_rot(rng))
    assert np.array_equal(out[0], sh[0])
    assert np.array_equal(out[4:], sh[4:])


def test_rotate_sh_four_quarter_turns():
    rng = np.random.default_rng(7)
    sh = rng.normal(size=(4, 3))
    Rz = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    out = sh
    for _ in range(4):
        out = rotate_sh(out, Rz)
    assert np.allclose(out, sh, atol=1e-12)


def test_rotate_sh_composition():
    rng = np.random.default_rng(8)
    sh = rng.normal(size=(4, 3))
    R1, R2 = rand_rot(rng, 2)
    a = rotate_sh(rotate_sh(sh, R1), R2)
    b = rotate_sh(sh, R2 @ R1)
    assert np.allclose(a, b, atol=1e-10)


def test_rotated_appearance_follows_the_object():
    # color seen along R d after rotating equals the original color along d
    rng = np.random.default_rng(9)
    sh = rng.normal(size=(4, 3))
    R = rand_rot(rng)
    out = rotate_sh(sh, R)
    for d in rng.normal(size=(10, 3)):
        d /= np.linalg.norm(d)
        assert np.allclose(sh_color(out, R @ d), sh_color(sh, d), atol=1e-12)


def test_evolve_updates_particles():
    rng = np.random.default_rng(10)
    ps = ParticleSet.from_positions(rng.random((5, 3)), 1e-6, cov=np.diag([1.0, 2.0, 3.0]),
                                    sh_degree=1)
    ps.sh[:] = rng.normal(size=ps.sh.shape)
    R = rand_rot(rng, 5)
    ps.F[:] = R * 1.1
    out = evolve(ps)
    assert np.allclose(out.dynamic_cov, update_covariance(ps.static_cov, ps.F))
    assert np.allclose(out.sh[:, 0], ps.sh[:, 0])
    for i in range(5):
        assert np.allclose(out.sh[i], rotate_sh(ps.sh[i], R[i]), atol=1e-12)
