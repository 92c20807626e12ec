import math

import numpy as np
import pytest

from splatmpm.errors import DegenerateCovarianceError
from splatmpm.fill import (BOUNDARY, EXTERIOR, INTERIOR, ColorBand, DensityField,
                           assign_materials_by_color, classify, density_field, fill,
                           radial_color, seed_interior, sh0_init, sh0_to_color, uniform_color,
                           watermelon_bands)
from splatmpm.model import ParticleSet
from splatmpm.oracle import oracle_density
from splatmpm.presets import PRESETS
from splatmpm.scenes import sphere_shell


def one_splat(sigma=0.1, opacity=1.0):
    ps = ParticleSet.from_positions([(0.0, 0.0, 0.0)], 1.0, cov=sigma ** 2 * np.eye(3))
    ps.opacity[:] = opacity
    return ps


def cube_field(n, mask):
    return DensityField(np.zeros(3), 0.01, (n, n, n), mask.astype(float))


# ------------------------------------------------------------------ density


def test_density_at_center_and_one_sigma():
    ps = one_splat(0.1, 0.7)
    # odd lattice with a cell centered on the splat
    f = density_field(ps, 9, origin=(-0.045, -0.045, -0.045), spacing=0.01)
    assert f.density[4, 4, 4] == pytest.approx(0.7, rel=1e-15)
    f = density_field(ps, 3, origin=(0.05, -0.05, -0.05), spacing=0.1)
    assert f.density[0, 0, 0] == pytest.approx(0.7 * math.exp(-0.5), rel=1e-14)


def test_empty_set_gives_zero_field():
    f = density_field(ParticleSet.empty(0), 8)
    assert f.density.shape == (8, 8, 8) and not f.density.any()


def test_degenerate_covariance_names_particle():
    ps = ParticleSet.from_positions(np.zeros((3, 3)), 1.0, cov=np.eye(3))
    ps.static_cov[2] = np.diag([1.0, 1.0, 0.0])
    with pytest.raises(DegenerateCovarianceError) as e:
        density_field(ps, 8)
    assert e.value.particle == 2


def test_truncation_within_bound():
    rng = np.random.default_rng(0)
    n = 300
    ps = ParticleSet.from_positions(rng.uniform(-1, 1, (n, 3)), 1.0)
    for i in range(n):
        B = rng.normal(size=(3, 3)) * 0.1
        ps.static_cov[i] = B @ B.T + 0.005 * np.eye(3)
    ps.opacity[:] = rng.uniform(0, 1, n)
    mult = 2.5
    f = density_field(ps, 24, support_radius_mult=mult)
    exact = oracle_density(ps, f.cell_centers()).reshape(f.dims)
    bound = math.exp(-0.5 * mult * mult) * ps.opacity.sum()
    err = np.abs(f.density - exact).max()
    assert err <= bound
    assert err > 0  # truncation is really active


def test_deformed_flag_uses_dynamic_cov():
    ps = one_splat(0.1)
    ps.dynamic_cov[:] = 0.2 ** 2 * np.eye(3)
    kw = dict(origin=(0.05, -0.05, -0.05), spacing=0.1)
    a = density_field(ps, 3, **kw).density[0, 1, 1]
    b = density_field(ps, 3, deformed=True, **kw).density[0, 0, 0]
    assert b == pytest.approx(math.exp(-0.125))
    assert a != b


# ----------------------------------------------------------------- classify


def shell_mask(n=21, r_in=5, r_out=7):
    c = (n - 1) / 2
    idx = np.indices((n, n, n)) - c
    r = np.sqrt((idx ** 2).sum(0))
    return (r >= r_in) & (r <= r_out), r


def test_synthetic_shell_encloses_ball():
    mask, r = shell_mask()
    f = classify(cube_field(21, mask), 0.5)
    assert f.count(INTERIOR) == int((r < 5).sum())
    assert np.array_equal(f.classes == INTERIOR, r < 5)
    assert f.count(BOUNDARY) == int(mask.sum())


def test_interior_unreachable_from_hull():
    mask, _ = shell_mask()
    mask[10, 10, 14:] = False  # punch a hole through the shell
    f = classify(cube_field(21, mask), 0.5)
    assert f.count(INTERIOR) == 0


def test_thresholds():
    mask, _ = shell_mask()
    f = cube_field(21, mask)
    assert classify(f, 2.0).count(INTERIOR) == 0
    assert classify(f, 2.0).count(EXTERIOR) == 21 ** 3
    z = classify(f, 0.0)
    assert z.count(BOUNDARY) == 21 ** 3 and z.count(INTERIOR) == 0


def test_boundary_monotone_in_tau():
    ps = sphere_shell(1.0, 800, seed=1)
    f = density_field(ps, 32)
    counts = [classify(f, t).count(BOUNDARY) for t in np.linspace(0, 1.5, 16)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))


# ------------------------------------------------------------------ seeding


def test_single_cell_volume_and_radius():
    classes = np.zeros((3, 3, 3), dtype=np.int8)
    classes[1, 1, 1] = INTERIOR
    f = DensityField(np.zeros(3), 0.01, (3, 3, 3), np.zeros((3, 3, 3)), classes, 0.2)
    ps = seed_interior(f, 8, uniform_color((0.2, 0.4, 0.6)), 0, seed=3)
    assert len(ps) == 8
    assert np.allclose(ps.volume, 1.25e-7, rtol=1e-12)
    r = math.sqrt(ps.static_cov[0, 0, 0])
    assert r == pytest.approx(3.102e-3, abs=5e-7)
    assert np.allclose(ps.static_cov, r * r * np.eye(3))
    assert np.all(ps.opacity == 1.0)
    assert np.allclose(ps.base_colors(), (0.2, 0.4, 0.6), atol=1e-15)
    inside = (ps.position > 0.01) & (ps.position < 0.02)
    assert inside.all()
    # one particle per octant of the cell
    octant = np.floor((ps.position - 0.01) / 0.005).astype(int)
    assert len({tuple(o) for o in octant}) == 8


def test_seeding_empty_and_deterministic():
    mask, _ = shell_mask()
    f = classify(cube_field(21, mask), 0.5)
    a = seed_interior(f, 5, seed=11)
    b = seed_interior(f, 5, seed=11)
    for k in a.__dict__:
        assert np.array_equal(getattr(a, k), getattr(b, k))
    assert a.volume.sum() == pytest.approx(f.count(INTERIOR) * f.cell_volume, rel=1e-12)
    cells = np.floor((a.position - f.origin) / f.spacing).astype(int)
    assert np.all(f.classes[cells[:, 0], cells[:, 1], cells[:, 2]] == INTERIOR)
    none = classify(cube_field(21, mask), 5.0)
    assert len(seed_interior(none, 8)) == 0


def test_seeding_with_materials_sets_mass_and_alpha():
    mask, _ = shell_mask()
    f = classify(cube_field(21, mask), 0.5)
    mats = PRESETS["watermelon"].materials
    ps = seed_interior(f, 1, radial_color((0.105, 0.105, 0.105),
                                          [(0.02, (0.1, 0.1, 0.1)), (1.0, (0.9, 0.1, 0.1))]),
                       lambda pts, cols: assign_materials_by_color(
                           ParticleSet.from_positions(pts, 1.0), []).material_id + 1,
                       materials=mats)
    assert np.all(ps.material_id == 1)
    assert np.allclose(ps.mass, mats[1].density * ps.volume)
    assert np.all(ps.alpha == mats[1].alpha0)


def test_fill_sphere_shell_volume():
    ps = sphere_shell(1.0, 4000, seed=2)
    field, interior = fill(ps, 96, particles_per_cell=1)
    ball = 4 / 3 * math.pi
    assert interior.volume.sum() == pytest.approx(ball, rel=0.1)


# ------------------------------------------------------------------ colors


def test_sh0_examples():
    assert sh0_init(0.5) == 0.0
    assert sh0_init(1.0) == pytest.approx(math.sqrt(math.pi), rel=1e-15)
    assert sh0_init(0.0) == pytest.approx(-math.sqrt(math.pi), rel=1e-15)
    rng = np.random.default_rng(0)
    c = rng.uniform(0, 1, (1000, 3))
    assert np.abs(sh0_to_color(sh0_init(c)) - c).max() <= 1e-12
    with pytest.raises(ValueError):
        sh0_init((0.5, 1.2, 0.0))


def test_watermelon_bands():
    ps = ParticleSet.from_positions(np.zeros((4, 3)), 1.0)
    ps.sh[:, 0] = sh0_init([(0.05, 0.05, 0.05), (0.9, 0.1, 0.1), (0.1, 0.6, 0.15),
                            (0.2, 0.2, 0.9)])
    assign_materials_by_color(ps, watermelon_bands(rind=0, flesh=1, seed=2), default=7)
    assert list(ps.material_id) == [2, 1, 0, 7]
    mats = PRESETS["watermelon"].materials
    assert [mats[i].beta for i in ps.material_id[:3]] == [5.0, 0.6, 2.0]


def test_first_matching_band_wins():
    ps = ParticleSet.from_positions(np.zeros((1, 3)), 1.0)
    ps.sh[:, 0] = sh0_init([0.1, 0.1, 0.1])
    assign_materials_by_color(ps, [ColorBand(3), ColorBand(4)], default=0)
    assert ps.material_id[0] == 3
