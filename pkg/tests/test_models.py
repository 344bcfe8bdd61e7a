import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import brute_energy, brute_logz, brute_mrf_logz, random_couplings, states
from isingmf import (
    AsymmetricCoupling,
    BadSubsetKey,
    DimensionMismatch,
    InvalidParams,
    IsingModel,
    ModelFormatError,
    Mrf,
    NonFiniteEntry,
    NonzeroDiagonal,
    ProductDistribution,
    TooLargeForExact,
    block_copies,
    curie_weiss,
    degree_norms,
    energy,
    exact_free_energy,
    exact_kl_to_boltzmann,
    frobenius_norm,
    generate,
    load_model,
    mf_objective,
    model_from_json,
    model_to_json,
    random_gaussian,
    random_mrf,
    save_model,
    uniform_graph,
    uniform_hypergraph,
    validate,
)


def two_spin(w=0.5):
    return IsingModel(np.array([[0.0, w], [w, 0.0]]))


# ---------------------------------------------------------------- validate


def test_validate_accepts_symmetric():
    validate(two_spin())


def test_validate_asymmetric():
    with pytest.raises(AsymmetricCoupling) as info:
        validate(IsingModel(np.array([[0.0, 0.5], [0.4, 0.0]])))
    assert info.value.index == (0, 1)


def test_validate_diagonal_and_nonfinite():
    with pytest.raises(NonzeroDiagonal):
        validate(IsingModel(np.array([[1.0, 0.0], [0.0, 0.0]])))
    with pytest.raises(NonFiniteEntry):
        validate(IsingModel(np.array([[0.0, np.nan], [np.nan, 0.0]])))
    with pytest.raises(NonFiniteEntry):
        validate(IsingModel(np.zeros((2, 2)), [0.0, np.inf]))


def test_validate_unsorted_key():
    with pytest.raises(BadSubsetKey):
        validate(Mrf(4, {(3, 1): 1.0}))
    with pytest.raises(BadSubsetKey):
        validate(Mrf(4, {(1, 1): 1.0}))
    with pytest.raises(BadSubsetKey):
        validate(Mrf(4, {(0, 1, 2): 1.0}, order=2))


def test_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        IsingModel(np.zeros((2, 3)))
    with pytest.raises(DimensionMismatch):
        IsingModel(np.zeros((2, 2)), [0.0])


# ------------------------------------------------------------------- norms


def test_frobenius_constant_matrix():
    n, c = 7, 0.3
    J = np.full((n, n), c)
    np.fill_diagonal(J, 0.0)
    assert frobenius_norm(IsingModel(J)) == pytest.approx(c * math.sqrt(n * (n - 1)), rel=1e-14)
    assert frobenius_norm(IsingModel(np.zeros((3, 3)))) == 0.0


def test_frobenius_mrf_345():
    m = Mrf(3, {(0, 1): 3.0, (0, 1, 2): 4.0})
    assert frobenius_norm(m) == pytest.approx(5.0)
    norms = degree_norms(m)
    assert norms[2] == pytest.approx(3.0) and norms[3] == pytest.approx(4.0) and norms[1] == 0.0


@given(st.integers(1, 5), st.integers(1, 4))
@settings(max_examples=25, deadline=None)
def test_block_copies_frobenius(k, m):
    rng = np.random.default_rng(k * 10 + m)
    base = IsingModel(random_couplings(rng, k))
    assert frobenius_norm(block_copies(base, m)) == pytest.approx(math.sqrt(m) * frobenius_norm(base), rel=1e-13)


# ------------------------------------------------------------------ energy


def test_energy_examples():
    assert energy(two_spin(), [1.0, 1.0]) == pytest.approx(1.0)
    m = IsingModel(random_couplings(np.random.default_rng(1), 5), np.ones(5))
    assert energy(m, np.zeros(5)) == 0.0
    with pytest.raises(DimensionMismatch):
        energy(m, np.zeros(4))


def test_energy_matches_double_loop(rng):
    J = random_couplings(rng, 8)
    h = rng.normal(size=8)
    x = rng.uniform(-1, 1, 8)
    assert energy(IsingModel(J, h), x) == pytest.approx(brute_energy(J, h, x), abs=1e-12)


def test_mrf_energy_and_to_mrf(rng):
    J = random_couplings(rng, 5)
    h = rng.normal(size=5)
    m = IsingModel(J, h)
    x = rng.uniform(-1, 1, 5)
    assert energy(m.to_mrf(), x) == pytest.approx(energy(m, x), abs=1e-12)


@given(arrays(float, 6, elements=st.floats(-1, 1)), st.integers(0, 5), st.floats(-1, 1), st.floats(-1, 1))
@settings(max_examples=50, deadline=None)
def test_energy_multilinear(x, i, a, b):
    m = random_mrf(6, 3, 1.0, seed=3, degrees={1, 2, 3})

    def at(t):
        y = x.copy()
        y[i] = t
        return energy(m, y)

    # slope between two probe pairs must agree
    s1 = (at(1.0) - at(-1.0)) / 2.0
    if abs(a - b) > 1e-3:
        s2 = (at(a) - at(b)) / (a - b)
        assert s2 == pytest.approx(s1, abs=1e-9 / abs(a - b) + 1e-9)


# ------------------------------------------------------ mean-field objective


def test_mf_objective_examples():
    J = random_couplings(np.random.default_rng(2), 4)
    assert mf_objective(IsingModel(J), np.zeros(4)) == pytest.approx(4 * math.log(2))
    assert mf_objective(IsingModel(np.zeros((1, 1))), [1.0]) == 0.0
    assert mf_objective(two_spin(), [1.0, 1.0]) == pytest.approx(1.0)


def test_product_distribution_rejects_out_of_range():
    with pytest.raises(ValueError):
        ProductDistribution([0.0, 1.5])


# -------------------------------------------------------------- exact oracle


def test_exact_small_cases():
    assert exact_free_energy(IsingModel(np.zeros((1, 1)))) == pytest.approx(math.log(2), abs=1e-15)
    assert exact_free_energy(two_spin()) == pytest.approx(math.log(2 * math.e + 2 / math.e), abs=1e-14)
    assert exact_free_energy(two_spin()) == pytest.approx(1.8200751916029178, abs=1e-12)


def test_exact_matches_brute_force(rng):
    J = random_couplings(rng, 10)
    h = rng.normal(size=10)
    assert exact_free_energy(IsingModel(J, h)) == pytest.approx(brute_logz(J, h), abs=1e-10)


def test_exact_mrf_matches_brute_force():
    m = random_mrf(7, 3, 0.8, seed=5, degrees={1, 2, 3})
    assert exact_free_energy(m) == pytest.approx(brute_mrf_logz(7, m.terms), abs=1e-10)


def test_exact_zero_couplings_reference(rng):
    h = rng.normal(size=9)
    ref = float(np.sum(np.log(2 * np.cosh(h))))
    assert exact_free_energy(IsingModel(np.zeros((9, 9)), h)) == pytest.approx(ref, abs=1e-10)


def test_exact_overflow_safe():
    m = curie_weiss(12, 400.0)
    # ground states at all-equal spins dominate: energy beta/(2n) * n(n-1)
    lead = 400.0 / 24 * 12 * 11
    assert exact_free_energy(m) == pytest.approx(lead + math.log(2), rel=1e-12)


def test_exact_cap():
    with pytest.raises(TooLargeForExact):
        exact_free_energy(IsingModel(np.zeros((26, 26))))
    with pytest.raises(TooLargeForExact):
        exact_free_energy(IsingModel(np.zeros((6, 6))), cap=5)


# ----------------------------------------------------------------------- KL


def test_kl_examples():
    z = IsingModel(np.zeros((4, 4)))
    assert exact_kl_to_boltzmann(z, np.zeros(4)) == pytest.approx(0.0, abs=1e-14)
    assert exact_kl_to_boltzmann(z, [1.0, 0, 0, 0]) == pytest.approx(math.log(2), abs=1e-14)
    h = np.array([0.3, -1.0, 2.0])
    assert exact_kl_to_boltzmann(IsingModel(np.zeros((3, 3)), h), np.tanh(h)) == pytest.approx(0.0, abs=1e-9)


def test_kl_matches_direct_sum(rng):
    n = 8
    J = random_couplings(rng, n, 0.5)
    h = rng.normal(size=n)
    x = rng.uniform(-0.95, 0.95, n)
    X = states(n)
    E = np.array([brute_energy(J, h, s) for s in X])
    logP = E - np.log(np.exp(E - E.max()).sum()) - E.max()
    mu = np.prod((1 + X * x) / 2, axis=1)
    direct = float(np.sum(mu * (np.log(mu) - logP)))
    assert exact_kl_to_boltzmann(IsingModel(J, h), x) == pytest.approx(direct, abs=1e-8)


@given(st.integers(2, 9), st.floats(0.05, 3.0), st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_gibbs_principle(n, sigma, seed):
    m = random_gaussian(n, sigma, seed=seed, field_sigma=0.5)
    x = np.random.default_rng(seed).uniform(-1, 1, n)
    assert mf_objective(m, x) <= exact_free_energy(m) + 1e-9
    assert exact_kl_to_boltzmann(m, x) >= -1e-9


# --------------------------------------------------------------- generators


def test_curie_weiss_values():
    m = curie_weiss(3, 2.0, 0.0)
    off = m.couplings[~np.eye(3, dtype=bool)]
    assert np.allclose(off, 1 / 3) and np.all(np.diag(m.couplings) == 0)


def test_block_copies_shape():
    K = IsingModel(random_couplings(np.random.default_rng(0), 3))
    B = block_copies(K, 2)
    assert B.n == 6 and np.all(B.couplings[:3, 3:] == 0)


def test_uniform_graph_complete():
    m = uniform_graph(6, 15, 1.0, seed=4)
    off = m.couplings[~np.eye(6, dtype=bool)]
    assert np.allclose(off, 6 / 15)


def test_uniform_graph_too_many_edges():
    with pytest.raises(InvalidParams):
        uniform_graph(4, 7, 1.0)


def test_uniform_hypergraph_counts():
    m = uniform_hypergraph(8, 10, 3, 2.0, seed=1)
    assert len(m.terms) == 10 and all(len(k) == 3 for k in m.terms)
    assert all(w == pytest.approx(2.0 * 8 / 10) for w in m.terms.values())
    assert uniform_hypergraph(8, 10, 3, 2.0, seed=1).terms == m.terms


def test_generate_dispatch():
    assert generate("curie-weiss", {"n": 4, "beta": 1.0}).n == 4
    with pytest.raises(InvalidParams):
        generate("nope", {})
    with pytest.raises(InvalidParams):
        generate("curie_weiss", {"n": 4})


# ---------------------------------------------------------------- JSON I/O


@pytest.mark.parametrize("model", [
    curie_weiss(5, 1.5, 0.2),
    random_gaussian(6, 1.0, seed=9, field_sigma=0.3),
    uniform_hypergraph(7, 5, 3, 1.0, seed=2),
])
def test_json_round_trip(model, tmp_path):
    path = tmp_path / "m.json"
    save_model(model, path)
    back = load_model(path)
    x = np.linspace(-0.9, 0.9, model.n)
    assert energy(back, x) == pytest.approx(energy(model, x), abs=1e-12)


def test_json_edges_in_mrf_file():
    data = {"n": 3, "edges": [[0, 1, 0.5]], "terms": [[[0, 1, 2], 1.0]], "fields": [0.1, 0, 0]}
    m = model_from_json(data)
    x = np.array([0.3, -0.2, 0.7])
    assert energy(m, x) == pytest.approx(2 * 0.5 * 0.3 * -0.2 + 0.3 * -0.2 * 0.7 + 0.1 * 0.3)


@pytest.mark.parametrize("data", [
    {"edges": []},
    {"n": 0},
    {"n": 2, "edges": [[1, 0, 1.0]]},
    {"n": 2, "fields": [0.0]},
    {"n": 3, "terms": [[[2, 1], 1.0]]},
    {"n": 3, "terms": [[[0, 5], 1.0]]},
])
def test_json_rejects_bad_files(data):
    with pytest.raises(ModelFormatError):
        model_from_json(data)


def test_load_missing_and_garbage(tmp_path):
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ModelFormatError):
        load_model(bad)
    assert json.loads(json.dumps(model_to_json(curie_weiss(2, 1.0))))["n"] == 2
