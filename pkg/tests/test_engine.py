import numpy as np
import pytest

from splatmpm.boundary import BoundaryCondition
from splatmpm.engine import (Engine, bspline_weights, compute_stresses, g2p, grid_forces,
                             grid_update, p2g)
from splatmpm.errors import OutOfDomainError
from splatmpm.model import MpmGrid, ParticleSet
from splatmpm.presets import PRESETS

KIWI = PRESETS["kiwi"].materials[0]
JELLY = PRESETS["jelly"].materials[0]


def unit_grid(n=10, dx=0.1):
    return MpmGrid((0.0, 0.0, 0.0), dx, (n, n, n))


def block(lo, hi, h, mat=JELLY, jitter=0.0, seed=0):
    axes = [np.arange(a + 0.5 * h, b, h) for a, b in zip(lo, hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3)
    if jitter:
        pts += np.random.default_rng(seed).uniform(-jitter, jitter, pts.shape) * h
    ps = ParticleSet.from_positions(pts, h ** 3, cov=(0.5 * h) ** 2 * np.eye(3))
    ps.reset_physics([mat])
    return ps


# ----------------------------------------------------------------- weights


def test_weights_on_node():
    g = unit_grid()
    nodes, w, _ = bspline_weights((0.5, 0.5, 0.5), g)
    center = np.flatnonzero((nodes == 5).all(axis=1))
    assert w[center] == pytest.approx(0.75 ** 3, abs=1e-15)
    one_d = np.array([0.125, 0.75, 0.125])
    expect = np.einsum("a,b,c->abc", one_d, one_d, one_d).ravel()
    assert np.allclose(w, expect, atol=1e-15)


def test_weights_partition_of_unity():
    g = unit_grid()
    rng = np.random.default_rng(0)
    for x in rng.uniform(0.15, 0.75, (200, 3)):
        _, w, dw = bspline_weights(x, g)
        assert abs(w.sum() - 1) <= 1e-12
        assert np.abs(dw.sum(axis=0)).max() <= 1e-10
        assert w.min() >= 0


def test_weights_out_of_domain():
    with pytest.raises(OutOfDomainError):
        bspline_weights((0.1, 0.5, 0.5), unit_grid())


# --------------------------------------------------------------------- p2g


def test_p2g_single_particle_on_node():
    g = unit_grid()
    ps = ParticleSet.from_positions([(0.5, 0.5, 0.5)], 1.0)
    ps.mass[:] = 1.0
    ps.velocity[:] = (1.0, 0.0, 0.0)
    p2g(ps, g)
    assert g.mass[5, 5, 5] == pytest.approx(0.75 ** 3, rel=1e-12)
    assert np.allclose(g.momentum[5, 5, 5], (0.75 ** 3, 0, 0), rtol=1e-12)
    assert np.allclose(g.velocity[5, 5, 5], (1, 0, 0))


def test_p2g_mass_exact_and_empty():
    ps = block((0.2, 0.2, 0.2), (0.6, 0.6, 0.6), 0.05, jitter=0.3)
    ps.mass[:] = np.random.default_rng(1).uniform(0.5, 2.0, len(ps))
    eng = Engine(ps, [JELLY], unit_grid())  # snaps masses to the grid quantum
    g = unit_grid()
    p2g(ps, g)
    assert g.mass.sum() == ps.mass.sum() or \
        abs(g.mass.sum() - ps.mass.sum()) <= 1e-15 * ps.mass.sum()
    assert int(g.mass_units.sum()) == int(eng._munits.sum())
    assert np.allclose(g.momentum.reshape(-1, 3).sum(0), (ps.mass[:, None] * ps.velocity).sum(0))
    e = unit_grid()
    p2g(ParticleSet.empty(0), e)
    assert not e.mass.any() and not e.momentum.any()


# -------------------------------------------------------------- grid forces


def test_rest_state_forces_are_gravity():
    g = unit_grid()
    ps = block((0.3, 0.3, 0.3), (0.6, 0.6, 0.6), 0.05)
    p2g(ps, g)
    grid_forces(ps, [JELLY], g, gravity=(0, 0, -9.81))
    assert np.allclose(g.force, g.mass[..., None] * np.array([0, 0, -9.81]), atol=0)


def test_no_gravity_no_stress_no_force():
    g = unit_grid()
    ps = block((0.3, 0.3, 0.3), (0.6, 0.6, 0.6), 0.05)
    p2g(ps, g)
    grid_forces(ps, [JELLY], g)
    assert not g.force.any()


def test_compressed_block_pushes_outward():
    g = unit_grid(16, 0.05)
    ps = block((0.3, 0.3, 0.3), (0.55, 0.55, 0.55), 0.05)  # 5^3 particles
    assert len(ps) == 125
    ps.F[:] = 0.95 * np.eye(3)
    p2g(ps, g)
    grid_forces(ps, [JELLY], g)
    c = ps.position.mean(axis=0)
    x = g.node_positions() - c
    f = g.force
    has = g.mass > 0
    r = np.linalg.norm(x, axis=-1)
    inner = has & (np.abs(x).max(axis=-1) < 0.06)
    outer = has & (np.abs(x).max(axis=-1) > 0.12)
    fmax = np.linalg.norm(f, axis=-1).max()
    assert np.linalg.norm(f[inner], axis=-1).max() < 1e-9 * fmax
    radial = (f[outer] * x[outer]).sum(-1) / r[outer]
    assert np.all(radial >= -1e-12 * fmax) and radial.max() > 0


# -------------------------------------------------------------- grid update


def _one_node_grid(v):
    g = unit_grid()
    g.mass[5, 5, 5] = 1.0
    g.velocity[5, 5, 5] = v
    return g


def test_update_without_forces_keeps_velocity():
    g = _one_node_grid((1.0, 2.0, 3.0))
    grid_update(g, 0.1)
    assert np.array_equal(g.velocity[5, 5, 5], (1.0, 2.0, 3.0))


def test_slip_plane_removes_inward_normal():
    g = _one_node_grid((1.0, 0.0, -2.0))
    grid_update(g, 0.1, [BoundaryCondition.plane((0, 0, 0.5), (0, 0, 1), "slip")])
    assert np.array_equal(g.velocity[5, 5, 5], (1.0, 0.0, 0.0))
    g = _one_node_grid((1.0, 0.0, 2.0))  # separating: untouched
    grid_update(g, 0.1, [BoundaryCondition.plane((0, 0, 0.5), (0, 0, 1), "slip")])
    assert np.array_equal(g.velocity[5, 5, 5], (1.0, 0.0, 2.0))


def test_sticky_plane_and_box():
    g = _one_node_grid((1.0, 0.0, -2.0))
    grid_update(g, 0.1, [BoundaryCondition.plane((0, 0, 0.6), (0, 0, 1), "sticky")])
    assert not g.velocity[5, 5, 5].any()
    g = _one_node_grid((1.0, 0.0, -2.0))
    grid_update(g, 0.1, [BoundaryCondition.box((0.4, 0.4, 0.4), (0.6, 0.6, 0.6))])
    assert not g.velocity[5, 5, 5].any()


def test_moving_sticky_box_imposes_velocity():
    g = _one_node_grid((0.0, 0.0, 0.0))
    b = BoundaryCondition.box((0.4, 0.4, 0.4), (0.6, 0.6, 0.6), velocity=(0, 0, 3))
    grid_update(g, 0.1, [b])
    assert np.array_equal(g.velocity[5, 5, 5], (0, 0, 3))


# --------------------------------------------------------------------- g2p


def test_constant_field():
    g = unit_grid()
    ps = block((0.3, 0.3, 0.3), (0.6, 0.6, 0.6), 0.1, jitter=0.4)
    F0 = ps.F.copy()
    g.mass[:] = 1.0
    g.velocity[:] = (0.2, -0.1, 0.3)
    g.velocity_old[:] = g.velocity
    x0 = ps.position.copy()
    g2p(g, ps, [JELLY], 1e-3, flip_ratio=0.0)
    assert np.allclose(ps.velocity, (0.2, -0.1, 0.3), atol=1e-14)
    assert np.allclose(ps.F, F0, atol=1e-14)
    assert np.allclose(ps.position, x0 + 1e-3 * np.array([0.2, -0.1, 0.3]), atol=1e-15)


def test_rigid_rotation_gradient():
    g = unit_grid(16, 0.05)
    w = np.array([0.3, -0.5, 1.0])
    c = np.array([0.4, 0.4, 0.4])
    g.mass[:] = 1.0
    g.velocity[:] = np.cross(w, g.node_positions() - c)
    g.velocity_old[:] = g.velocity
    ps = block((0.3, 0.3, 0.3), (0.5, 0.5, 0.5), 0.05, jitter=0.4)
    dt = 1e-4
    g2p(g, ps, [JELLY], dt, flip_ratio=0.0)
    W = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])
    assert np.abs(ps.F - (np.eye(3) + dt * W)).max() < 1e-12
    sym = 0.5 * (ps.F + np.swapaxes(ps.F, 1, 2)) - np.eye(3)
    assert np.abs(sym).max() < 1e-6 * dt * np.abs(W).max() + 1e-15


def test_zero_dt_leaves_state():
    g = unit_grid()
    ps = block((0.3, 0.3, 0.3), (0.6, 0.6, 0.6), 0.1, jitter=0.4)
    g.mass[:] = 1.0
    g.velocity[:] = np.random.default_rng(0).normal(size=g.velocity.shape)
    g.velocity_old[:] = g.velocity
    before = ps.copy()
    g2p(g, ps, [JELLY], 0.0)
    assert np.array_equal(ps.position, before.position)
    assert np.array_equal(ps.F, before.F)
    assert np.array_equal(ps.alpha, before.alpha)


# -------------------------------------------------------------------- step


def test_free_fall():
    # a lone particle still feels round-off stress, so dt respects the wave speed
    ps = ParticleSet.from_positions([(0.5, 0.5, 2.0)], 1e-6)
    ps.reset_physics([JELLY])
    g = MpmGrid.around((0, 0, 0.5), (1, 1, 2.5), 0.1)
    eng = Engine(ps, [JELLY], g)
    dt, n = 1e-4, 2000
    eng.run(n, dt)
    t = n * dt
    drop = 2.0 - ps.position[0, 2]
    assert drop == pytest.approx(0.5 * 9.81 * t * t, rel=1e-3)


def test_static_block_settles_on_sticky_ground():
    # stiff enough that the gravity sag is tiny and the wave crosses in a few steps
    h = 0.01
    stiff = KIWI.with_(youngs_modulus=1e8)
    ps = block((0.0, 0.0, 0.0), (0.05, 0.05, 0.05), h / 2, mat=stiff)
    g = MpmGrid.around((0, 0, 0), (0.05, 0.05, 0.05), h)
    ground = BoundaryCondition.plane((0, 0, 0), (0, 0, 1), "sticky")
    eng = Engine(ps, [stiff], g, boundaries=[ground])
    stats = eng.run(100, 3e-7)
    assert stats[-1].max_speed < 1e-4


def test_zero_gravity_fixed_point():
    ps = block((0.3, 0.3, 0.3), (0.6, 0.6, 0.6), 0.05, jitter=0.3)
    before = ps.copy()
    eng = Engine(ps, [JELLY], unit_grid(), gravity=(0, 0, 0))
    eng.run(20, 1e-4)
    assert np.array_equal(ps.position, before.position)
    assert np.array_equal(ps.F, before.F)


def test_translation_invariance():
    dx = 0.05
    a = block((0.3, 0.3, 0.3), (0.6, 0.6, 0.6), dx / 2, mat=KIWI, jitter=0.3)
    a.velocity[:] = (0, 0, -1.0)
    b = a.copy()
    shift = np.array([3, -2, 4]) * dx
    b.position += shift
    b.ref_position += shift
    ga = MpmGrid.around((0, 0, 0), (1, 1, 1), dx)
    gb = MpmGrid(ga.origin + shift, dx, ga.dims)
    ea = Engine(a, [KIWI], ga, boundaries=[BoundaryCondition.plane((0, 0, 0.3), (0, 0, 1), "slip")])
    eb = Engine(b, [KIWI], gb,
                boundaries=[BoundaryCondition.plane(np.array((0, 0, 0.3)) + shift, (0, 0, 1),
                                                    "slip")])
    ea.run(30, 1e-4)
    eb.run(30, 1e-4)
    # positions are stored absolutely, so the offset costs a few ulps
    assert np.abs((b.position - shift) - a.position).max() < 1e-12
    assert np.abs(b.F - a.F).max() < 1e-10


def test_particles_leaving_are_clamped():
    ps = ParticleSet.from_positions([(0.5, 0.5, 0.5), (0.05, 0.5, 0.5)], 1e-3)
    ps.reset_physics([JELLY])
    eng = Engine(ps, [JELLY], unit_grid(), gravity=(0, 0, 0))
    assert eng.clamped_total == 1
    assert ps.position[1, 0] == pytest.approx(0.15)
    ps.velocity[0] = (50.0, 0, 0)
    stats = [eng.step(1e-3) for _ in range(10)]
    assert sum(s.clamped for s in stats) >= 1
    assert ps.position[:, 0].max() <= unit_grid().upper[0] - 1.5 * 0.1 + 1e-12


def test_cfl_warning_flag():
    ps = ParticleSet.from_positions([(0.5, 0.5, 0.5)], 1e-3)
    ps.reset_physics([JELLY])
    ps.velocity[0] = (0, 0, 1.0)
    eng = Engine(ps, [JELLY], unit_grid(), gravity=(0, 0, 0))
    s = eng.step(0.2)
    assert s.cfl_warning and s.cfl == pytest.approx(2.0)


def test_stats_csv_row_is_numeric():
    ps = block((0.3, 0.3, 0.3), (0.6, 0.6, 0.6), 0.1)
    row = Engine(ps, [JELLY], unit_grid()).step(1e-4).csv_row()
    assert "np." not in row
    [float(x) for x in row.split(",")]


def test_compute_stresses_rest_is_zero():
    ps = block((0.3, 0.3, 0.3), (0.6, 0.6, 0.6), 0.1)
    assert not compute_stresses(ps, [JELLY]).any()
