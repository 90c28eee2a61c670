import numpy as np
import pytest

from hypoflow import zoo
from hypoflow.errors import ConfigError
from hypoflow.hormander import build_hierarchy, spanning_dimension
from hypoflow.models import integrate_path, sample_noise


def test_registry_lists_and_rejects():
    names = zoo.zoo_names()
    assert "integrated_bm" in names and "cascade" in names
    with pytest.raises(ConfigError, match="unknown model"):
        zoo.get_model("not_a_model")
    rows = zoo.zoo_table()
    assert all({"name", "citation", "expected"} <= set(r) for r in rows)


def test_every_entry_point_evaluates_cleanly():
    for name in zoo.zoo_names():
        entry = zoo.get_model(name)
        entry.spec.check_point(entry.x0())


def test_expected_spanning_facts():
    # the declared facts are the regression corpus: every entry's rank
    # claim must reproduce under the actual checker at its start point
    for name in zoo.zoo_names():
        entry = zoo.get_model(name)
        h = build_hierarchy(entry.spec, entry.expected["j0"])
        rep = spanning_dimension(h, entry.x0())
        assert rep.spans == entry.expected["spans"], name
        assert rep.numerical_rank == entry.expected["rank"], name


def test_expected_noise_rank_facts():
    for name in zoo.zoo_names():
        entry = zoo.get_model(name)
        x, y = entry.spec.split(entry.x0())
        bv = entry.spec.b(x, y)
        lam = np.linalg.eigvalsh(bv @ bv.T)[0]
        if entry.expected["noise_full_rank"]:
            assert lam > 1e-10, name
        else:
            assert lam <= 1e-10, name


def test_cascade_level_vectors_fact():
    entry = zoo.cascade()
    h = build_hierarchy(entry.spec, 3)
    z = entry.x0()
    produced = [f.value(z) for level in h.levels for f in level]
    for expected in entry.expected["level_vectors"]:
        assert any((v == np.array(expected)).all() for v in produced)


def test_hamiltonian_reduces_to_langevin_bitwise():
    ham = zoo.hamiltonian()
    lan = zoo.langevin()
    grid = sample_noise(1, 1.0, 500, 3, 0)
    p1 = integrate_path(ham.spec, [1.0, 0.0], grid)
    p2 = integrate_path(lan.spec, [1.0, 0.0], grid)
    assert (p1.states == p2.states).all()


def test_high_order_two_is_integrated_bm():
    entry = zoo.high_order(order=2, coeffs=(0.0, 0.0), b=-1.0)
    ibm = zoo.integrated_bm()
    x = np.array([0.3])
    y = np.array([-0.8])
    assert (entry.spec.a1(x, y) == ibm.spec.a1(x, y)).all()
    assert (entry.spec.a2(x, y) == ibm.spec.a2(x, y)).all()
    assert (entry.spec.b(x, y) == ibm.spec.b(x, y)).all()
    grid = sample_noise(1, 1.0, 200, 5, 0)
    p1 = integrate_path(entry.spec, [0.0, 0.0], grid)
    p2 = integrate_path(ibm.spec, [0.0, 0.0], grid)
    assert (p1.states == p2.states).all()


def test_high_order_linear_matches_companion_construction():
    coeffs = (2.0, 0.5, 1.5)
    entry = zoo.high_order_linear(coeffs, c=0.25, b=1.0)
    spec = entry.spec
    x = np.array([0.1, -0.2])
    y = np.array([0.4])
    # companion drift: shift up, then the negated linear combination
    assert (spec.a1(x, y) == np.array([-0.2, 0.4])).all()
    expected_top = -(2.0 * 0.1 + 0.5 * -0.2 + 1.5 * 0.4) - 0.25
    assert spec.a2(x, y)[0] == expected_top
    assert entry.expected["j0"] == 2
    h = build_hierarchy(spec, 2)
    assert spanning_dimension(h, entry.x0()).numerical_rank == 2


def test_high_order_coefficient_count_guard():
    with pytest.raises(ConfigError):
        zoo.high_order(order=3, coeffs=(1.0, 2.0))


def test_langevin_hypothesis_check_quadratic():
    grid = np.linspace(-10.0, 10.0, 201).reshape(-1, 1)
    rep = zoo.langevin_hypothesis_check(
        lambda q: 0.5 * float(q @ q), lambda q: q, 1.0, grid)
    assert rep["feasible"]
    assert rep["beta"] == pytest.approx(0.1)
    assert rep["alpha"] == 0.0


def test_langevin_hypothesis_check_sign_violation():
    grid = np.linspace(-10.0, 10.0, 101).reshape(-1, 1)
    rep = zoo.langevin_hypothesis_check(
        lambda q: float(q[0]), lambda q: np.ones(1), 1.0, grid)
    assert not rep["feasible"]
    assert "negative" in rep["reason"]
    assert rep["witness"] is not None


def test_hamiltonian_convexity_probe():
    nu = zoo.hamiltonian_convexity_probe(
        lambda z: np.eye(1), np.linspace(-3, 3, 11).reshape(-1, 1))
    assert nu == pytest.approx(1.0)


def test_conserved_direction_along_paths():
    entry = zoo.rank_deficient()
    v = np.array(entry.expected["conserved_direction"], dtype=float)
    grid = sample_noise(1, 1.0, 400, 9, 0)
    path = integrate_path(entry.spec, [0.3, -0.2, 0.5, 0.1], grid)
    w = path.states @ v
    assert np.abs(w - w[0]).max() <= 1e-12


def test_quartic_entry_reports_untruncated_explosions():
    entry = zoo.hamiltonian(potential="quartic")
    assert not entry.expected["globally_lipschitz"]
    exploded = 0
    for i in range(50):
        grid = sample_noise(1, 1.0, 50, 7, i)
        exploded += integrate_path(entry.spec, [15.0, 0.0], grid).exploded
    assert exploded > 0  # reportable, not fatal


def test_parameterized_names_distinct():
    assert zoo.cascade().name != zoo.cascade(a2="sin").name
    assert zoo.hamiltonian().name != \
        zoo.hamiltonian(potential="quartic").name
