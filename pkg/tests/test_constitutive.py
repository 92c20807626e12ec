import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from splatmpm.constitutive import (
    ReturnCase, fluid_params, kirchhoff_stress, p0_of, plastic_projection, pq_of,
    reconstruct_def_grad, return_map, update_alpha, yield_function,
)
from splatmpm.errors import DegenerateGradientError, PressureOverflowError
from splatmpm.model import ElasticModel, NaccMaterial
from splatmpm.oracle import oracle_fd_stress, oracle_return_map
from splatmpm.presets import PRESETS

KIWI = PRESETS["kiwi"].materials[0]
UNIT = NaccMaterial(1000.0, 0.3, 1.0, beta=1.0, slope_m=2.36)


def random_F(rng, lo=0.5, hi=2.0):
    while True:
        F = np.eye(3) + 0.3 * rng.normal(size=(3, 3))
        d = np.linalg.det(F)
        if lo <= d <= hi:
            return F


# ------------------------------------------------------------------ stress


def test_identity_has_zero_stress():
    assert np.array_equal(kirchhoff_stress(np.eye(3), KIWI), np.zeros((3, 3)))
    assert pq_of(np.eye(3), KIWI) == (0.0, 0.0)


def test_isotropic_stretch():
    c = 1.1
    tau = kirchhoff_stress(c * np.eye(3), KIWI)
    expected = (3 * KIWI.lam + 2 * KIWI.mu) * math.log(c)
    assert np.allclose(tau, expected * np.eye(3), rtol=1e-12, atol=1e-12)
    assert pq_of(c * np.eye(3), KIWI).q == pytest.approx(0.0, abs=1e-9)


def test_isochoric_shear_has_shear_only():
    F = np.eye(3)
    F[0, 1] = 0.01
    p, q = pq_of(F, KIWI)
    assert abs(p) < 1e-6 * q
    assert q > 0


@pytest.mark.parametrize("model", list(ElasticModel))
def test_stress_matches_energy_gradient(model):
    rng = np.random.default_rng(3)
    m = KIWI.with_(elastic_model=model)
    for _ in range(25):
        F = random_F(rng)
        a = kirchhoff_stress(F, m)
        b = oracle_fd_stress(F, m, 1e-6)
        assert np.abs(a - b).max() <= 1e-5 * np.abs(a).max()


def test_stress_is_symmetric():
    rng = np.random.default_rng(4)
    tau = kirchhoff_stress(random_F(rng), KIWI)
    assert np.allclose(tau, tau.T, atol=1e-12 * np.abs(tau).max())


def test_degenerate_gradient_raises():
    with pytest.raises(DegenerateGradientError):
        kirchhoff_stress(np.diag([1.0, 1.0, 0.0]), KIWI)
    with pytest.raises(DegenerateGradientError):
        kirchhoff_stress(np.diag([1.0, 1.0, -1.0]), KIWI)


# ------------------------------------------------------------ yield / p0


def test_p0_values():
    m = NaccMaterial(1000 * 3 * (1 - 2 * 0.3), 0.3, 1.0, xi=2.0)  # kappa = 1000
    assert m.kappa == pytest.approx(1000.0)
    assert p0_of(0.0, m) == 0.0
    assert p0_of(0.5, m) == 0.0
    assert p0_of(-0.04, m) == pytest.approx(80.085360644, rel=1e-9)


def test_p0_monotone():
    a = np.linspace(-1, 0.2, 50)
    vals = [p0_of(x, KIWI) for x in a]
    assert all(v1 >= v2 for v1, v2 in zip(vals, vals[1:]))


def test_yield_examples():
    m = NaccMaterial(1.0, 0.3, 1.0, beta=1.0, slope_m=2.36)
    assert yield_function((1.0, 0.0), 1.0, m) == 0.0
    assert yield_function((-1.0, 0.0), 1.0, m) == 0.0
    assert yield_function((0.0, 10.0), 1.0, m) == pytest.approx(294.4304, abs=1e-9)


def test_yield_scale_covariance():
    rng = np.random.default_rng(0)
    for _ in range(100):
        p0, p, q, s = rng.uniform(0.1, 10), rng.uniform(-10, 10), rng.uniform(0, 10), \
            rng.uniform(0.1, 10)
        y1 = yield_function((p, q), p0, KIWI)
        y2 = yield_function((s * p, s * q), s * p0, KIWI)
        assert y2 == pytest.approx(s * s * y1, rel=1e-10, abs=1e-10 * s * s * (1 + p0 ** 2 * 6))
        c1 = return_map((p, q), p0, KIWI).case_tag
        c2 = return_map((s * p, s * q), s * p0, KIWI).case_tag
        assert c1 == c2


# -------------------------------------------------------------- return map


def test_elastic_trial_unchanged():
    r = return_map((0.1, 0.1), 1.0, UNIT)
    assert r.case_tag == ReturnCase.ELASTIC
    assert r.projected == (0.1, 0.1)
    assert r.delta_alpha == 0.0


def test_upper_tip():
    r = return_map((2.0, 0.5), 1.0, UNIT)
    assert r.case_tag == ReturnCase.TIP_UPPER
    assert r.projected == (1.0, 0.0)


def test_lower_tip():
    r = return_map((-3.0, 0.5), 1.0, UNIT)
    assert r.case_tag == ReturnCase.TIP_LOWER
    assert r.projected == (-1.0, 0.0)


def test_vertical_projection_above_center():
    r = return_map((0.0, 10.0), 1.0, UNIT)
    assert r.case_tag == ReturnCase.INTERIOR
    assert r.projected.p == pytest.approx(0.0, abs=1e-15)
    assert r.projected.q == pytest.approx(2.36 / math.sqrt(3), rel=1e-12)


def test_zero_p0_projects_to_origin():
    r = return_map((0.3, 0.2), 0.0, UNIT)
    assert tuple(r.projected) == (0.0, 0.0)
    assert r.case_tag != ReturnCase.ELASTIC


def test_continuity_gap_follows_sqrt_law():
    # left of p0 the pseudo-center sits near p0 - (1 + k) eps, so the gap is
    # the ellipse height there: M sqrt((1 + b)(1 + k) eps / (1 + 2b)) p0
    eps, k = 1e-6, 2.0
    a = return_map((1 - eps, 1e3), 1.0, UNIT, k=k).projected
    b = return_map((1 + eps, 1e3), 1.0, UNIT, k=k).projected
    gap = math.hypot(a.p - b.p, a.q - b.q)
    assert gap == pytest.approx(2.36 * math.sqrt(2 * 3 * eps / 3), rel=1e-2)


def test_continuity_bound_sqrt_eps():
    p0 = 1.0
    for q in (0.1, 1.0, 10.0, 1000.0):
        ratios = []
        for eps in 10.0 ** np.arange(-8, -2.5, 0.5):
            a = return_map((p0 - eps, q), p0, UNIT).projected
            b = return_map((p0 + eps, q), p0, UNIT).projected
            ratios.append(math.hypot(a.p - b.p, a.q - b.q) / math.sqrt(eps))
        assert max(ratios) < 10.0


def test_large_k_recovers_fixed_center():
    from splatmpm.oracle import fixed_center_return
    rng = np.random.default_rng(7)
    p0, b = 1.0, UNIT.beta
    pc = 0.5 * (1 - b) * p0
    n = 0
    while n < 300:
        p = pc + rng.uniform(-0.9, 0.9) * (p0 - pc)
        q = rng.uniform(0, 5)
        if yield_function((p, q), p0, UNIT) <= 0:
            continue
        n += 1
        r = return_map((p, q), p0, UNIT, k=200).projected
        f = fixed_center_return((p, q), p0, UNIT)
        scale = max(math.hypot(f.p, f.q), 1e-12)
        assert math.hypot(r.p - f.p, r.q - f.q) <= 0.01 * scale


@settings(max_examples=300, deadline=None)
@given(st.floats(-0.999, 0.999), st.floats(0.0, 50.0), st.sampled_from([0.3, 1.0, 2.0, 5.0]))
def test_interior_matches_bisection_oracle(u, q, beta):
    m = UNIT.with_(beta=beta)
    p0 = 1.0
    p = 0.5 * ((1 - beta) + u * (1 + beta)) * p0  # maps u in (-1,1) onto (-beta p0, p0)
    if yield_function((p, q), p0, m) <= 0:
        return
    r = return_map((p, q), p0, m)
    o = oracle_return_map((p, q), p0, m)
    assert r.case_tag == ReturnCase.INTERIOR
    assert math.hypot(r.projected.p - o.p, r.projected.q - o.q) <= 1e-9 * max(1.0, q)


@settings(max_examples=300, deadline=None)
@given(st.floats(-20, 20), st.floats(0, 1e3), st.floats(1e-3, 1e3))
def test_projection_on_surface(p, q, p0):
    r = return_map((p * p0, q * p0), p0, KIWI)
    if r.case_tag == ReturnCase.ELASTIC:
        return
    y = yield_function(r.projected, p0, KIWI)
    assert abs(y) <= 1e-8 * max(1.0, KIWI.slope_m ** 2 * p0 ** 2)
    assert -KIWI.beta * p0 - 1e-12 * p0 <= r.projected.p <= p0 * (1 + 1e-12)
    assert r.projected.q >= 0


# ------------------------------------------------------ reconstruction / alpha


@pytest.mark.parametrize("model", list(ElasticModel))
def test_reconstruct_closed_loop(model):
    rng = np.random.default_rng(11)
    m = KIWI.with_(elastic_model=model)
    p0 = p0_of(m.alpha0, m)
    done = 0
    while done < 50:
        F = random_F(rng, 0.8, 1.25)
        tr = pq_of(F, m)
        r = return_map(tr, p0, m, def_grad=F)
        if r.case_tag == ReturnCase.ELASTIC:
            continue
        done += 1
        back = pq_of(r.new_def_grad, m)
        assert back.p == pytest.approx(r.projected.p, rel=1e-6, abs=1e-9 * p0)
        assert back.q == pytest.approx(r.projected.q, rel=1e-6, abs=1e-9 * p0)


def test_reconstruct_identity():
    rng = np.random.default_rng(2)
    F = random_F(rng)
    out = reconstruct_def_grad(F, pq_of(F, KIWI), KIWI)
    assert np.allclose(out, F, atol=1e-12, rtol=0)


def test_reconstruct_volumetric_only():
    F = 1.02 * np.eye(3)
    p, _ = pq_of(F, KIWI)
    out = reconstruct_def_grad(F, (p, 0.0), KIWI)
    assert np.allclose(out, F, atol=1e-13)


def test_update_alpha_examples():
    m = NaccMaterial(1000 * 3 * 0.4, 0.3, 1.0)  # kappa = 1000
    assert update_alpha(-0.1, 50.0, 50.0, m) == -0.1
    d = update_alpha(0.0, 100.0, 80.0, m)
    assert d == pytest.approx(math.log(math.sqrt(0.8) / math.sqrt(0.84)), rel=1e-12)
    assert d == pytest.approx(-0.0244, abs=1e-5)
    assert update_alpha(0.0, 10.0, 20.0, m) > 0
    with pytest.raises(PressureOverflowError):
        update_alpha(0.0, 600.0, 10.0, m)


def test_elastic_inaction_is_exact():
    F = np.diag([1.0, 1.0, 0.9999])
    F_new, a, case = plastic_projection(F, KIWI.alpha0, KIWI)
    assert case == ReturnCase.ELASTIC
    assert a == KIWI.alpha0
    assert np.array_equal(F_new, F)


def test_fluid_params():
    for m in [KIWI, PRESETS["jelly"].materials[0]]:
        f = fluid_params(m)
        assert (f.youngs_modulus, f.poisson_ratio, f.density) == \
            (m.youngs_modulus, m.poisson_ratio, m.density)
        assert f.alpha0 == -1e-6 and f.beta == 1e-3
        assert p0_of(f.alpha0, f) == pytest.approx(f.kappa * math.sinh(f.xi * 1e-6), rel=1e-12)
        assert p0_of(f.alpha0, f) < 1e-5 * f.kappa
