import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from hypoflow import zoo
from hypoflow.errors import ConfigError, NumericalFailureError
from hypoflow.flow import blocks_at, flow_deviation_report, integrate_flow
from hypoflow.models import NoiseGrid, integrate_path, sample_noise


def _flow(entry, n_steps=1000, T=1.0, seed=3, x0=None):
    grid = sample_noise(entry.spec.d, T, n_steps, seed, 0)
    path = integrate_path(entry.spec,
                          entry.x0() if x0 is None else x0, grid)
    return path, integrate_flow(entry.spec, path)


def test_initial_condition_is_identity():
    _, flow = _flow(zoo.cascade(), n_steps=16)
    assert (flow.J[0] == np.eye(4)).all()
    assert (flow.J_inv[0] == np.eye(4)).all()


def test_integrated_bm_flow_closed_form():
    # nilpotent generator: J_t = [[1, t], [0, 1]] exactly on the grid
    path, flow = _flow(zoo.integrated_bm(), n_steps=1000)
    t = path.grid.times
    assert np.allclose(flow.J[:, 0, 1], t, atol=1e-12)
    assert np.allclose(flow.J_inv[:, 0, 1], -t, atol=1e-12)
    assert np.abs(flow_deviation_report(flow)).max() <= 10 * path.grid.dt


def test_cascade_flow_matches_matrix_exponential():
    # constant drift Jacobian and constant noise: J_t = expm(G t)
    entry = zoo.cascade()
    path, flow = _flow(entry, n_steps=2000)
    G = np.zeros((4, 4))
    G[:3] = entry.spec.jac_a1(np.zeros(3), np.zeros(1))
    G[3] = entry.spec.jac_a2(np.zeros(3), np.zeros(1))
    exact = expm(G)
    assert np.abs(flow.J[-1] - exact).max() <= 10 * path.grid.dt
    exact_inv = expm(-G)
    assert np.abs(flow.J_inv[-1] - exact_inv).max() <= 10 * path.grid.dt


def test_cascade_noisy_block_inverse_is_scalar_flow():
    # with zero noisy drift the D tile of the inverse solves the scalar
    # y-equation flow, which is identically one; C stays zero
    entry = zoo.cascade()
    _, flow = _flow(entry, n_steps=500)
    A, B, C, D = blocks_at(flow, 500)
    assert (C == 0).all()
    assert D[0, 0] == 1.0


def test_flow_requires_healthy_path():
    entry = zoo.hamiltonian(potential="quartic")
    grid = NoiseGrid(T=16.0, n_steps=16, increments=np.zeros((16, 1)),
                     seed=0, path_index=0)
    path = integrate_path(entry.spec, [30.0, 0.0], grid)
    assert path.exploded
    with pytest.raises(NumericalFailureError):
        integrate_flow(entry.spec, path)


def test_blocks_identity_tiling_and_bitwise_reassembly():
    entry = zoo.rank_deficient()
    _, flow = _flow(entry, n_steps=64)
    A, B, C, D = blocks_at(flow, 0)
    assert (A == np.eye(2)).all() and (D == np.eye(2)).all()
    assert (B == 0).all() and (C == 0).all()
    k = 37
    A, B, C, D = blocks_at(flow, k)
    rebuilt = np.block([[A, B], [C, D]])
    assert (rebuilt == flow.J_inv[k]).all()
    with pytest.raises(ConfigError):
        blocks_at(flow, 65)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=64))
def test_blocks_tile_everywhere(k):
    entry = zoo.chain()
    _, flow = _flow(entry, n_steps=64, seed=8)
    A, B, C, D = blocks_at(flow, k)
    assert (np.block([[A, B], [C, D]]) == flow.J_inv[k]).all()


def test_integrated_bm_inverse_block_value():
    _, flow = _flow(zoo.integrated_bm(), n_steps=1000)
    _, B, _, _ = blocks_at(flow, 1000)
    assert abs(B[0, 0] - (-1.0)) <= 1e-10


def test_deviation_report_monotone_and_zero_at_start():
    _, flow = _flow(zoo.langevin(), n_steps=500)
    dev = flow_deviation_report(flow)
    assert dev[0] == 0.0
    assert (np.diff(dev) >= 0).all()


def test_deviation_first_order_in_dt():
    entry = zoo.langevin()
    fine = sample_noise(1, 1.0, 2000, 21, 0)
    coarse_inc = fine.increments[0::2] + fine.increments[1::2]
    devs = []
    for inc, n in ((coarse_inc, 1000), (fine.increments, 2000)):
        grid = NoiseGrid(T=1.0, n_steps=n, increments=inc, seed=21,
                         path_index=0)
        path = integrate_path(entry.spec, entry.x0(), grid)
        devs.append(flow_deviation_report(integrate_flow(entry.spec,
                                                         path))[-1])
    assert devs[0] <= 1e-2
    assert 1.5 <= devs[0] / devs[1] <= 3.0


def test_constant_noise_flow_is_seed_invariant():
    # linear drift and constant diffusion: the flow solves a
    # deterministic matrix ODE, so different seeds agree exactly
    for entry in (zoo.integrated_bm(), zoo.cascade(), zoo.langevin()):
        _, f1 = _flow(entry, n_steps=200, seed=1)
        _, f2 = _flow(entry, n_steps=200, seed=2)
        assert (f1.J == f2.J).all()
        assert (f1.J_inv == f2.J_inv).all()


def test_flow_driven_by_the_path_increments():
    # same start, different increments => different flow for a model
    # whose drift Jacobian depends on the state
    entry = zoo.chain(mid="cubic")
    grid1 = sample_noise(1, 1.0, 200, 5, 0)
    grid2 = sample_noise(1, 1.0, 200, 5, 1)
    p1 = integrate_path(entry.spec, [0.0, 0.0, 1.0], grid1)
    p2 = integrate_path(entry.spec, [0.0, 0.0, 1.0], grid2)
    f1 = integrate_flow(entry.spec, p1)
    f2 = integrate_flow(entry.spec, p2)
    assert not np.allclose(f1.J[-1], f2.J[-1])
    # and re-running on the same bundle is bit-identical
    f1b = integrate_flow(entry.spec, p1)
    assert (f1.J == f1b.J).all()


def test_flow_determinant_positive_across_zoo():
    for name in zoo.zoo_names():
        entry = zoo.get_model(name)
        path, flow = _flow(entry, n_steps=1000, seed=13)
        if path.exploded or flow.exploded:
            continue
        dets = np.linalg.det(flow.J)
        assert (dets > 0).all(), entry.name
