import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_energy, states
from isingmf import (
    IsingModel,
    NonUniformField,
    NotFerromagnetic,
    all_states,
    blow_up,
    curie_weiss,
    energy,
    ferro_optimize,
    glauber_sample,
    glauber_transition_matrix,
    mf_objective,
    multistart_ascent,
)
from isingmf.ferro import default_replication, glauber_samples, sample_count


def ferro_base(rng, n):
    A = rng.uniform(0, 0.5, (n, n))
    J = np.triu(A, 1)
    return IsingModel(J + J.T, np.full(n, 0.2))


# ------------------------------------------------------------------ blow-up


def test_blow_up_identity(rng):
    base = ferro_base(rng, 4)
    bu = blow_up(base, 1)
    assert np.array_equal(bu.blown.couplings, base.couplings)


def test_blow_up_small():
    base = IsingModel(np.array([[0.0, 0.3], [0.3, 0.0]]))
    J = blow_up(base, 2).blown.couplings
    assert J.shape == (4, 4)
    # copies 0,1 of vertex 0 and copies 2,3 of vertex 1
    assert J[0, 1] == 0 and J[2, 3] == 0
    assert np.allclose(J[np.ix_([0, 1], [2, 3])], 0.15)
    assert np.count_nonzero(np.triu(J, 1)) == 4


def test_blow_up_scaling_exact(rng):
    base = ferro_base(rng, 3)
    bu = blow_up(base, 5)
    x = rng.uniform(-1, 1, 3)
    ratio = mf_objective(bu.blown, bu.lift(x)) / mf_objective(base, x)
    assert ratio == pytest.approx(5.0, rel=1e-12)


@given(st.integers(1, 6), st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_blow_up_invariants(m, seed):
    base = ferro_base(np.random.default_rng(seed), 3)
    bu = blow_up(base, m)
    J = bu.blown.couplings
    assert bu.blown.n == 3 * m
    for i in range(3):
        for j in range(3):
            block = J[i * m:(i + 1) * m, j * m:(j + 1) * m]
            want = 0.0 if i == j else base.couplings[i, j] / m
            assert np.allclose(block, want)


def test_blow_up_rejects():
    with pytest.raises(NotFerromagnetic):
        blow_up(IsingModel(np.array([[0.0, -0.1], [-0.1, 0.0]])), 2)
    with pytest.raises(NonUniformField):
        blow_up(IsingModel(np.zeros((2, 2)), [0.0, 0.1]), 2)


def test_blow_up_lower_bound(rng):
    base = ferro_base(rng, 3)
    m = 3
    _, fb = multistart_ascent(base, seed=0)
    _, fm = multistart_ascent(blow_up(base, m).blown, seed=0)
    assert fm >= m * fb - 1e-6


# ----------------------------------------------------------------- Glauber


def test_glauber_free_spins():
    S = glauber_samples(IsingModel(np.zeros((4, 4))), 3, 2000, seed=1)
    assert np.all(np.abs(S.mean(axis=0)) <= 4 / math.sqrt(2000))


def test_glauber_field():
    S = glauber_samples(IsingModel(np.zeros((3, 3)), np.ones(3)), 5, 2000, seed=2)
    sd = math.sqrt((1 - math.tanh(1) ** 2) / 2000)
    assert np.all(np.abs(S.mean(axis=0) - math.tanh(1.0)) <= 4 * sd)


def test_glauber_long_run_distribution():
    J = np.array([[0, 0.3, 0.1], [0.3, 0, 0.2], [0.1, 0.2, 0]])
    h = np.full(3, 0.1)
    m = IsingModel(J, h)
    S = glauber_samples(m, 10, 100_000, seed=3)
    X = states(3)
    E = np.array([brute_energy(J, h, x) for x in X])
    p = np.exp(E - E.max())
    p /= p.sum()
    emp = np.array([np.mean(np.all(S == x, axis=1)) for x in X])
    assert 0.5 * np.abs(emp - p).sum() <= 0.02


def test_glauber_returns_spins_and_is_seeded():
    m = curie_weiss(6, 1.0)
    a = glauber_sample(m, 5, seed=11)
    assert set(np.unique(a)) <= {-1.0, 1.0}
    assert np.array_equal(a, glauber_sample(m, 5, seed=11))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_detailed_balance(n, rng):
    A = rng.normal(size=(n, n))
    m = IsingModel(np.triu(A, 1) + np.triu(A, 1).T, rng.normal(size=n))
    P = glauber_transition_matrix(m)
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-14)
    X = all_states(n)
    E = np.array([energy(m, x) for x in X])
    pi = np.exp(E - E.max())
    pi /= pi.sum()
    flow = pi[:, None] * P
    assert np.max(np.abs(flow - flow.T)) <= 1e-12


# -------------------------------------------------------------- optimiser


def test_sampling_parameters():
    assert sample_count(0.1) == math.ceil(math.log(30) / math.log(3)) + 2
    assert default_replication(8, 0.1) == min(math.ceil(8 * math.log(9) / 0.1), 5000 // 8)
    assert default_replication(3, 1.0) == math.ceil(3 * math.log(4))


def test_ferro_zero_model():
    _, v = ferro_optimize(IsingModel(np.zeros((5, 5))), seed=0)
    assert v == pytest.approx(5 * math.log(2), abs=1e-6)


def test_ferro_curie_weiss_seeds():
    m = curie_weiss(8, 2.0, 0.1)
    _, ref = multistart_ascent(m, seed=0)
    hits = sum(ferro_optimize(m, 0.1, 0.1, seed=s)[1] >= ref - 0.1 for s in range(20))
    assert hits >= 18


def test_ferro_disconnected_edges():
    J = np.zeros((4, 4))
    J[0, 1] = J[1, 0] = 0.8
    J[2, 3] = J[3, 2] = 0.4
    m = IsingModel(J, np.full(4, 0.05))
    _, v = ferro_optimize(m, 0.2, 0.1, seed=4)
    parts = sum(multistart_ascent(IsingModel(J[np.ix_(b, b)], np.full(2, 0.05)), seed=0)[1]
                for b in ([0, 1], [2, 3]))
    assert v == pytest.approx(parts, abs=1e-6)


def test_ferro_candidates_in_cube(rng):
    m = ferro_base(rng, 5)
    dist, v = ferro_optimize(m, 0.5, 0.2, seed=1, refine=False)
    assert np.all(np.abs(dist.means) <= 1.0)
    assert v == pytest.approx(mf_objective(m, dist))
    _, v2 = ferro_optimize(m, 0.5, 0.2, seed=1, refine=True)
    assert v2 >= v - 1e-12


def test_ferro_rejects_antiferro():
    with pytest.raises(NotFerromagnetic):
        ferro_optimize(IsingModel(np.array([[0.0, -1.0], [-1.0, 0.0]])))
