import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypoflow import zoo
from hypoflow.errors import ConfigError, HypothesisViolationError, \
    NumericalFailureError
from hypoflow.hormander import (ball_points, build_hierarchy,
                                ellipticity_along_path, local_constants,
                                spanning_dimension)
from hypoflow.models import ModelSpec, integrate_path, sample_noise


def test_level_cardinality():
    h = build_hierarchy(zoo.cascade().spec, 3)
    assert [len(lv) for lv in h.levels] == [1, 2, 4]
    h2 = build_hierarchy(zoo.rank_deficient().spec, 2)
    assert [len(lv) for lv in h2.levels] == [2, 6]


def test_cascade_printed_vectors_exact():
    h = build_hierarchy(zoo.cascade().spec, 3)
    z = np.zeros(4)
    lvl1 = [f.value(z) for f in h.levels[0]]
    lvl2 = [f.value(z) for f in h.levels[1]]
    lvl3 = [f.value(z) for f in h.levels[2]]
    assert any((v == np.array([1.0, 0.0, 0.0])).all() for v in lvl1)
    assert any((v == np.array([0.0, -1.0, 0.0])).all() for v in lvl2)
    assert any((v == np.array([1.0, 0.0, 1.0])).all() for v in lvl3)


def test_cascade_spans_at_random_points():
    h = build_hierarchy(zoo.cascade().spec, 3)
    rng = np.random.default_rng(0)
    for _ in range(10):
        rep = spanning_dimension(h, rng.normal(size=4) * 3, tol=1e-8)
        assert rep.numerical_rank == 3 and rep.spans
    rep = spanning_dimension(h, np.array([5.0, -2.0, 7.0, 1.0]))
    assert rep.numerical_rank == 3


def test_zero_drift_never_spans():
    spec = ModelSpec(
        m=1, n=1, d=1,
        a1=lambda x, y: np.zeros(1),
        a2=lambda x, y: np.zeros(1),
        b=lambda x, y: np.ones((1, 1)),
        jac_a1=lambda x, y: np.zeros((1, 2)),
        jac_a2=lambda x, y: np.zeros((1, 2)),
        jac_b=lambda x, y: np.zeros((1, 1, 2)),
        hess_a1=lambda x, y: np.zeros((1, 2, 2)),
        name="zero_drift", linear_drift=True)
    h = build_hierarchy(spec, 2)
    rep = spanning_dimension(h, np.zeros(2))
    assert rep.numerical_rank == 0 and not rep.spans and rep.modulus == 0.0


def test_integrated_bm_depth_one():
    h = build_hierarchy(zoo.integrated_bm().spec, 1)
    rep = spanning_dimension(h, np.zeros(2))
    assert rep.numerical_rank == 1 and rep.spans
    assert abs(rep.modulus - 1.0) <= 1e-14


def test_modulus_is_squared_smallest_singular_value():
    h = build_hierarchy(zoo.cascade().spec, 3)
    rep = spanning_dimension(h, np.array([0.3, -0.7, 0.2, 0.5]))
    assert rep.modulus == pytest.approx(rep.singular_values[-1] ** 2,
                                        rel=1e-12)


def test_kalman_oracle_linear_drift():
    # for a1 = P x + Q y the level union spans the Krylov space of
    # (P, Q); cascade has full Krylov rank three
    entry = zoo.cascade()
    P = entry.spec.jac_a1(np.zeros(3), np.zeros(1))[:, :3]
    Q = entry.spec.jac_a1(np.zeros(3), np.zeros(1))[:, 3:]
    krylov = np.hstack([Q, P @ Q, P @ P @ Q])
    h = build_hierarchy(entry.spec, 3)
    rep = spanning_dimension(h, np.zeros(4))
    assert rep.numerical_rank == np.linalg.matrix_rank(krylov)


@settings(max_examples=15, deadline=None)
@given(st.floats(min_value=-50.0, max_value=50.0).filter(
    lambda c: abs(c) > 1e-3))
def test_rank_invariant_under_field_scaling(c):
    base = zoo.cascade().spec
    scaled = ModelSpec(
        m=3, n=1, d=1,
        a1=lambda x, y: c * base.a1(x, y),
        a2=base.a2, b=base.b,
        jac_a1=lambda x, y: c * base.jac_a1(x, y),
        jac_a2=base.jac_a2, jac_b=base.jac_b,
        hess_a1=lambda x, y: np.zeros((3, 4, 4)),
        name="scaled", linear_drift=True)
    pt = np.array([0.1, 0.2, -0.3, 0.4])
    r0 = spanning_dimension(build_hierarchy(base, 3), pt)
    r1 = spanning_dimension(build_hierarchy(scaled, 3), pt)
    assert r0.numerical_rank == r1.numerical_rank
    assert r0.spans == r1.spans


def test_fd_fallback_depth_limit():
    # no analytic derivatives at all: depth 2 works (two nested central
    # differences), depth 3 must refuse with advice
    spec = ModelSpec(
        m=2, n=1, d=1,
        a1=lambda x, y: np.array([np.sin(y[0]), x[0]]),
        a2=lambda x, y: np.zeros(1),
        b=lambda x, y: np.ones((1, 1)),
        name="fd_only")
    assert spec.uses_fd_jacobians
    h = build_hierarchy(spec, 2)
    rep = spanning_dimension(h, np.array([0.0, 0.0, 1.0]))
    assert rep.uses_fd
    assert rep.numerical_rank == 2
    with pytest.raises(ConfigError, match="analytic"):
        build_hierarchy(spec, 3)


def test_fd_level_two_accuracy():
    # cubic coupling: the finite-difference hierarchy must match the
    # analytic one to ~1e-6 at level two
    fd_spec = ModelSpec(
        m=2, n=1, d=1,
        a1=lambda x, y: np.array([y[0] ** 3, x[0]]),
        a2=lambda x, y: np.zeros(1),
        b=lambda x, y: np.ones((1, 1)),
        name="fd_chain")
    exact = zoo.chain(mid="cubic").spec
    pt = np.array([0.2, -0.1, 0.7])
    h_fd = build_hierarchy(fd_spec, 2)
    h_ex = build_hierarchy(exact, 2)
    for f_fd, f_ex in zip(h_fd.all_fields(), h_ex.all_fields()):
        np.testing.assert_allclose(f_fd.value(pt), f_ex.value(pt),
                                   atol=2e-6)


def test_nonfinite_field_evaluation_names_provenance():
    spec = ModelSpec(
        m=1, n=1, d=1,
        a1=lambda x, y: np.array([np.sqrt(y[0])]),
        a2=lambda x, y: np.zeros(1),
        b=lambda x, y: np.ones((1, 1)),
        name="singular_field")
    h = build_hierarchy(spec, 1)
    with pytest.raises(NumericalFailureError, match="dy1"):
        spanning_dimension(h, np.array([1.0, 0.0]))


def test_ball_points_deterministic_and_inside():
    pts = ball_points(4, 1.5, 64)
    again = ball_points(4, 1.5, 64)
    assert (pts == again).all()
    assert (np.linalg.norm(pts, axis=1) <= 1.5 + 1e-12).all()


def test_local_constants_integrated_bm():
    entry = zoo.integrated_bm()
    h = build_hierarchy(entry.spec, 1)
    lc = local_constants(entry.spec, h, 1.0, sampling=128)
    assert lc.c == pytest.approx(0.5, rel=1e-9)
    assert lc.R3 == pytest.approx(0.5, rel=1e-9)
    assert lc.C0 == pytest.approx(2.0, rel=1e-9)
    assert lc.R1 > 0


def test_local_constants_langevin():
    entry = zoo.langevin()
    h = build_hierarchy(entry.spec, 1)
    lc = local_constants(entry.spec, h, 1.0, sampling=128)
    assert lc.c == pytest.approx(0.5, rel=1e-9)
    assert lc.R3 == pytest.approx(0.5, rel=1e-9)


def test_local_constants_rejects_degenerate_noise():
    entry = zoo.rank_deficient()
    h = build_hierarchy(entry.spec, 1)
    with pytest.raises(HypothesisViolationError) as err:
        local_constants(entry.spec, h, 1.0, sampling=64)
    assert err.value.witness is not None


def test_local_constants_rejects_rank_deficient_hierarchy():
    entry = zoo.chain(mid="zero")
    h = build_hierarchy(entry.spec, 2)
    with pytest.raises(HypothesisViolationError, match="modulus"):
        local_constants(entry.spec, h, 1.0, sampling=64)


def test_ellipticity_constant_noise():
    entry = zoo.integrated_bm()
    grid = sample_noise(1, 1.0, 200, 3, 0)
    path = integrate_path(entry.spec, entry.x0(), grid)
    rep = ellipticity_along_path(entry.spec, path)
    assert np.allclose(rep.lams, 1.0)
    assert rep.tau_prime_step is None
    assert rep.hypothesis_ok


def test_ellipticity_state_dependent_noise():
    spec = ModelSpec(
        m=1, n=1, d=1,
        a1=lambda x, y: np.array([y[0]]),
        a2=lambda x, y: np.zeros(1),
        b=lambda x, y: np.array([[1.0 + y[0] ** 2]]),
        jac_a1=lambda x, y: np.array([[0.0, 1.0]]),
        jac_a2=lambda x, y: np.zeros((1, 2)),
        jac_b=lambda x, y: np.array([[[0.0, 2.0 * y[0]]]]),
        name="widening", linear_drift=True)
    grid = sample_noise(1, 1.0, 400, 5, 0)
    path = integrate_path(spec, [0.0, 0.0], grid)
    rep = ellipticity_along_path(spec, path)
    ys = path.states[:, 1]
    np.testing.assert_allclose(rep.lams, (1.0 + ys ** 2) ** 2, rtol=1e-12)
    # per-step continuity bound: |lam(s) - lam(t)| <= ||bb^T(s) - bb^T(t)||
    bb = (1.0 + ys ** 2) ** 2
    assert np.all(np.abs(np.diff(rep.lams)) <= np.abs(np.diff(bb)) + 1e-14)


def test_ellipticity_flags_degenerate_start():
    entry = zoo.rank_deficient()
    grid = sample_noise(1, 1.0, 50, 3, 0)
    path = integrate_path(entry.spec, entry.x0(), grid)
    rep = ellipticity_along_path(entry.spec, path)
    assert not rep.hypothesis_ok
    assert np.allclose(rep.lams, 0.0, atol=1e-12)


def test_dedup_drops_constant_duplicates():
    h = build_hierarchy(zoo.cascade().spec, 3, dedup=True)
    # zero fields collapse to a single representative per level
    assert len(h.levels[2]) < 4
