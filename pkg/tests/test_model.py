import numpy as np
import pytest

from splatmpm.model import (MpmGrid, NaccMaterial, ParticleSet, SceneConfig, sh_coeff_count,
                            sh_degree_of, validate)
from splatmpm.presets import PRESETS, all_materials


def jelly_block(n=27):
    g = np.linspace(0, 0.02, round(n ** (1 / 3)))
    pts = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
    ps = ParticleSet.from_positions(pts, 1e-6, cov=1e-6 * np.eye(3))
    ps.reset_physics(PRESETS["jelly"].materials)
    return ps


def test_valid_scene_has_empty_report():
    ps = jelly_block()
    snapshot = ps.copy()
    assert validate(ps, PRESETS["jelly"].materials) == []
    for k in ps.__dict__:
        assert np.array_equal(getattr(ps, k), getattr(snapshot, k))


def test_opacity_violation():
    ps = jelly_block()
    ps.opacity[3] = 1.2
    assert validate(ps, PRESETS["jelly"].materials) == ["particle 3: opacity out of [0,1]"]


def test_degenerate_gradient_violation():
    ps = jelly_block()
    ps.F[5] = np.diag([1.0, 0.0, 1.0])
    rep = validate(ps, PRESETS["jelly"].materials)
    assert len(rep) == 1 and rep[0].startswith("particle 5: degenerate deformation gradient")


def test_other_violations():
    ps = jelly_block()
    ps.static_cov[0] = np.diag([1.0, -1.0, 1.0])
    ps.material_id[1] = 4
    ps.position[2, 0] = np.nan
    ps.mass[4] = 0.0
    rep = validate(ps, PRESETS["jelly"].materials)
    assert "particle 0: static covariance not positive definite" in rep
    assert "particle 1: material_id does not index the material table" in rep
    assert "particle 2: non-finite position" in rep
    assert "particle 4: mass must be > 0" in rep


def test_material_violations():
    bad = NaccMaterial(-1.0, 0.6, 1.0)
    rep = validate(ParticleSet.empty(0), [bad])
    assert any("material 0" in r for r in rep) and len(rep) >= 2


def test_material_lame():
    m = NaccMaterial(2000.0, 0.25, 2.0)
    assert m.mu == pytest.approx(800.0)
    assert m.lam == pytest.approx(800.0)
    assert m.kappa == pytest.approx(2000.0 / (3 * 0.5))


def test_sh_counts():
    assert [sh_coeff_count(d) for d in range(4)] == [1, 4, 9, 16]
    assert sh_degree_of(16) == 3
    with pytest.raises(ValueError):
        sh_degree_of(5)


def test_substeps_per_frame():
    jelly, melon = PRESETS["jelly"], PRESETS["watermelon"]
    for row in (jelly, melon):
        cfg = SceneConfig([], row.materials, dt_frame=row.dt_frame, dt_step=row.dt_step)
        assert cfg.substeps_per_frame() == 200
        assert row.substeps_per_frame == 200
    with pytest.raises(ValueError):
        SceneConfig([], [], dt_frame=1e-3, dt_step=3e-4).substeps_per_frame()


def test_presets_are_valid():
    for m in all_materials():
        assert m.violations() == []
    assert PRESETS["kiwi"].materials[0].alpha0 == -0.04
    assert [m.beta for m in PRESETS["watermelon"].materials] == [2.0, 0.6, 5.0]


def test_grid_clear_and_shape():
    g = MpmGrid.around((0, 0, 0), (1, 1, 1), 0.25)
    g.mass += 1
    g.momentum += 2
    g.clear()
    assert not g.mass.any() and not g.momentum.any() and not g.mass_units.any()
    assert np.all(g.upper >= 1.0)
    with pytest.raises(ValueError):
        MpmGrid((0, 0, 0), 0.0, (8, 8, 8))


def test_particle_accessors_roundtrip():
    ps = jelly_block(8)
    one = ParticleSet.from_particles([ps.particle(i) for i in range(len(ps))])
    for k in ps.__dict__:
        assert np.array_equal(getattr(ps, k), getattr(one, k))
    both = ParticleSet.concat([ps, ps.with_sh_degree(1)])
    assert both.sh.shape == (16, 4, 3)
