import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import TINY_GRIDS, random_field
from ocapotts._enumerate import CapacityError
from ocapotts.lattice import Lattice, LatticeError, build_oca_plan, full_plan, neighbors
from ocapotts.potts import (NumericalError, exact_conditional, exact_conditionals, exact_log_density,
                            fit_beta, golden_section_max, log_potential, modified_hamiltonian,
                            oca_conditional, oca_conditional_vector, oca_conditionals,
                            oca_log_likelihood, oca_log_terms, pseudo_log_likelihood, summary_stat)
from ocapotts.sampler import exact_sample, make_rng


def brute_stat(z, lat):
    return sum(z[i] == z[j] for i in range(lat.n) for j in neighbors(i, lat) if j > i)


def brute_log_density(z, beta, lat, k):
    logw = [beta * brute_stat(a, lat) for a in itertools.product(range(k), repeat=lat.n)]
    return beta * brute_stat(z, lat) - float(np.logaddexp.reduce(logw))


def brute_conditional(i, z, beta, lat, k):
    # p(z_i = . | z_{<i}) by summing over every completion of sites i+1..n-1
    out = np.zeros(k)
    for kk in range(k):
        for tail in itertools.product(range(k), repeat=lat.n - i - 1):
            a = list(z[:i]) + [kk] + list(tail)
            out[kk] += math.exp(beta * brute_stat(a, lat))
    return out / out.sum()


def test_summary_stat_examples():
    lat = Lattice(2, 2)
    assert summary_stat([0, 0, 0, 0], lat) == 4
    assert summary_stat([0, 1, 1, 0], lat) == 0
    assert summary_stat([0, 1, 0, 1], lat) == 2


def test_log_potential_examples():
    lat = Lattice(2, 2)
    assert log_potential([1, 0, 1, 1], 0.0, lat) == 0.0
    assert log_potential([0, 0, 0, 0], 0.35, lat) == pytest.approx(1.4, abs=1e-15)
    assert log_potential([0, 1, 1, 0], 0.9, lat) == 0.0


@settings(max_examples=50)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(2, 4), st.integers(0, 10 ** 6))
def test_summary_stat_matches_pair_count(n1, n2, k, seed):
    lat = Lattice(n1, n2)
    z = random_field(lat, k, seed)
    assert summary_stat(z, lat) == brute_stat(z, lat)


def test_exact_density_small_cases():
    lat = Lattice(1, 2)
    for z in itertools.product(range(2), repeat=2):
        assert math.exp(exact_log_density(list(z), 0.0, lat, 2)) == pytest.approx(0.25, abs=1e-15)
    assert math.exp(exact_log_density([0, 0], math.log(2), lat, 2)) == pytest.approx(1 / 3, abs=1e-15)


def test_exact_density_sums_to_one_3x3():
    lat = Lattice(3, 3)
    total = sum(math.exp(exact_log_density(list(z), 0.35, lat, 2))
                for z in itertools.product(range(2), repeat=9))
    assert total == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("shape,k", [((2, 2), 2), ((2, 3), 2), ((2, 2), 3), ((1, 4), 3)])
def test_exact_density_matches_brute_force(shape, k):
    lat = Lattice(*shape)
    z = random_field(lat, k, 3)
    for beta in (0.0, 0.35, 0.9):
        assert exact_log_density(z, beta, lat, k) == pytest.approx(brute_log_density(z, beta, lat, k), abs=1e-12)


def test_capacity_guard():
    with pytest.raises(CapacityError):
        exact_log_density(np.zeros(30, dtype=int), 0.3, Lattice(5, 6), 2)


def test_exact_conditional_examples():
    lat = Lattice(1, 2)
    assert exact_conditional(1, [0, 0], 0, math.log(2), lat, 2) == pytest.approx(2 / 3, abs=1e-15)
    z = random_field(Lattice(2, 3), 3, 1)
    p = exact_conditionals(z, 0.0, Lattice(2, 3), 3)
    assert np.allclose(p, 1 / 3, atol=1e-15)


def test_exact_conditional_last_site_closed_form():
    lat = Lattice(3, 3)
    z = random_field(lat, 3, 5)
    beta = 0.7
    i = lat.n - 1
    a = np.array([sum(z[j] == k for j in neighbors(i, lat)) for k in range(3)])
    expect = np.exp(beta * a) / np.exp(beta * a).sum()
    assert np.allclose(exact_conditionals(z, beta, lat, 3)[i], expect, atol=1e-14)


@pytest.mark.parametrize("shape,k", [((2, 2), 2), ((2, 3), 2), ((1, 4), 3)])
def test_exact_conditionals_match_brute_force(shape, k):
    lat = Lattice(*shape)
    z = random_field(lat, k, 11)
    table = exact_conditionals(z, 0.6, lat, k)
    for i in range(lat.n):
        assert np.allclose(table[i], brute_conditional(i, z, 0.6, lat, k), atol=1e-13)


def test_modified_hamiltonian_examples():
    lat = Lattice(12, 12)
    assert modified_hamiltonian(5, np.zeros(144, dtype=int), 0.7, build_oca_plan(lat, 0, 0)) == 0.0
    plan = build_oca_plan(lat, 10, 6)
    assert modified_hamiltonian(65, np.zeros(144, dtype=int), 0.0, plan) == 0.0
    n_pairs = len(plan.pairs(65))
    assert n_pairs == 24
    assert modified_hamiltonian(65, np.ones(144, dtype=int), 0.35, plan) == pytest.approx(0.35 * n_pairs)
    with pytest.raises(LatticeError):
        modified_hamiltonian(65, {65: 0}, 0.35, plan)


def test_modified_hamiltonian_dict_labels():
    lat = Lattice(4, 4)
    plan = build_oca_plan(lat, 4, 2)
    z = random_field(lat, 2, 2)
    labels = {int(j): int(z[j]) for j in plan.window(5)}
    assert modified_hamiltonian(5, labels, 0.4, plan) == modified_hamiltonian(5, z, 0.4, plan)


def test_oca_conditional_beta_zero():
    lat = Lattice(5, 5)
    plan = build_oca_plan(lat, 4, 2)
    z = random_field(lat, 3, 0)
    assert np.allclose(oca_conditionals(z, 0.0, plan, 3), 1 / 3, atol=1e-15)
    assert oca_log_likelihood(z, 0.0, plan, 3) == pytest.approx(25 * math.log(1 / 3), abs=1e-12)


def test_oca_conditional_no_future_closed_form():
    lat = Lattice(5, 5)
    plan = build_oca_plan(lat, 6, 0)
    z = random_field(lat, 3, 4)
    beta = 0.8
    for i in range(lat.n):
        g = set(plan.g(i).tolist())
        a = np.array([sum(z[j] == k for j in neighbors(i, lat) if j in g) for k in range(3)])
        expect = np.exp(beta * a) / np.exp(beta * a).sum()
        assert np.allclose(oca_conditional_vector(i, z, beta, plan, 3), expect, atol=1e-14)


@pytest.mark.parametrize("shape", TINY_GRIDS)
@pytest.mark.parametrize("k", [2, 3])
def test_full_sets_equal_exact(shape, k):
    lat = Lattice(*shape)
    plan = full_plan(lat)
    for seed in range(3):
        z = random_field(lat, k, seed)
        for beta in (0.0, 0.35, 0.8):
            assert np.allclose(oca_conditionals(z, beta, plan, k), exact_conditionals(z, beta, lat, k),
                               atol=1e-12, rtol=0)
            assert abs(oca_log_likelihood(z, beta, plan, k) - exact_log_density(z, beta, lat, k)) < 1e-10


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 7), st.integers(1, 7), st.sampled_from([2, 3, 5]), st.floats(0, 1.2),
       st.integers(0, 3), st.integers(0, 10 ** 6), st.data())
def test_conditionals_normalised_and_prune_invariant(n1, n2, k, beta, m_f, seed, data):
    lat = Lattice(n1, n2)
    plan = build_oca_plan(lat, 2 * m_f, m_f)
    pruned = build_oca_plan(lat, 2 * m_f, m_f, prune_past_pairs=True)
    z = random_field(lat, k, seed)
    i = data.draw(st.integers(0, lat.n - 1))
    p = oca_conditional_vector(i, z, beta, plan, k)
    assert abs(p.sum() - 1.0) < 1e-12
    assert np.allclose(p, oca_conditional_vector(i, z, beta, pruned, k), atol=1e-12, rtol=0)


def test_conditional_reads_only_past():
    lat = Lattice(6, 6)
    plan = build_oca_plan(lat, 8, 4)
    z = random_field(lat, 3, 0)
    i = 14
    other = z.copy()
    other[i:] = (other[i:] + 1) % 3
    assert np.array_equal(oca_conditional_vector(i, z, 0.6, plan, 3),
                          oca_conditional_vector(i, other, 0.6, plan, 3))
    assert oca_conditional(i, z, 1, 0.6, plan, 3) == oca_conditional_vector(i, z, 0.6, plan, 3)[1]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.permutations([0, 1, 2]))
def test_label_permutation_invariance(seed, perm):
    lat = Lattice(5, 6)
    plan = build_oca_plan(lat, 4, 2)
    z = random_field(lat, 3, seed)
    zp = np.asarray(perm)[z]
    assert summary_stat(z, lat) == summary_stat(zp, lat)
    assert oca_log_likelihood(z, 0.7, plan, 3) == pytest.approx(oca_log_likelihood(zp, 0.7, plan, 3), abs=1e-10)
    assert pseudo_log_likelihood(z, 0.7, lat, 3) == pytest.approx(pseudo_log_likelihood(zp, 0.7, lat, 3), abs=1e-10)


def test_thread_count_does_not_change_terms():
    lat = Lattice(20, 20)
    plan = build_oca_plan(lat, 8, 4)
    z = random_field(lat, 3, 9)
    a = oca_log_terms(z, 0.5, plan, 3, threads=1)
    b = oca_log_terms(z, 0.5, plan, 3, threads=4)
    assert np.array_equal(a, b)
    assert oca_log_likelihood(z, 0.5, plan, 3, threads=1) == oca_log_likelihood(z, 0.5, plan, 3, threads=4)


def test_pseudo_examples():
    lat = Lattice(2, 2)
    z = np.zeros(4, dtype=int)
    assert pseudo_log_likelihood(z, 0.0, lat, 2) == pytest.approx(4 * math.log(0.5))
    b = 0.45
    expect = 4 * math.log(math.exp(2 * b) / (math.exp(2 * b) + 1))
    assert pseudo_log_likelihood(z, b, lat, 2) == pytest.approx(expect, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_pseudo_matches_per_site_enumeration(seed):
    lat = Lattice(3, 3)
    z = random_field(lat, 3, seed)
    beta = 0.55
    total = 0.0
    for i in range(lat.n):
        w = [math.exp(beta * brute_stat(np.where(np.arange(9) == i, k, z), lat)) for k in range(3)]
        total += math.log(w[z[i]] / sum(w))
    assert pseudo_log_likelihood(z, beta, lat, 3) == pytest.approx(total, abs=1e-12)


def test_golden_section_finds_quadratic_max():
    x, fx, _ = golden_section_max(lambda b: -(b - 0.731) ** 2, 0.0, 2.0, 1e-6)
    assert abs(x - 0.731) < 1e-5


def test_fit_constant_field_hits_boundary():
    lat = Lattice(8, 8)
    plan = build_oca_plan(lat, 4, 2)
    z = np.zeros(lat.n, dtype=int)
    for obj in ("oca", "pseudo"):
        res = fit_beta(z, plan, 2, obj)
        assert res.beta == 2.0 and res.at_boundary


def test_fit_uniform_field_near_zero():
    lat = Lattice(32, 32)
    plan = build_oca_plan(lat, 4, 2)
    z = make_rng(4).integers(0, 2, lat.n)
    for obj in ("oca", "pseudo"):
        assert fit_beta(z, plan, 2, obj).beta < 0.05


def test_fit_recovers_mle_on_tiny_grid():
    # with full sets the OCA objective is the exact likelihood; compare with a dense grid search
    lat = Lattice(3, 3)
    z = exact_sample(lat, 0.6, 2, make_rng(8))
    res = fit_beta(z, full_plan(lat), 2, "oca", beta_max=3.0, tol=1e-6)
    grid = np.linspace(0, 3, 30001)
    dens = [exact_log_density(z, b, lat, 2) for b in grid[::100]]
    coarse = grid[::100][int(np.argmax(dens))]
    assert abs(res.beta - coarse) <= 0.01 + 1e-9 or res.at_boundary


def test_fit_nonfinite_objective():
    lat = Lattice(3, 3)
    plan = build_oca_plan(lat, 2, 1)
    with pytest.raises(NumericalError) as err:
        fit_beta(np.zeros(9, dtype=int), plan, 2, "oca", beta_max=math.inf)
    assert err.value.beta is not None


def test_fit_unknown_objective():
    lat = Lattice(3, 3)
    with pytest.raises(ValueError):
        fit_beta(np.zeros(9, dtype=int), build_oca_plan(lat, 2, 1), 2, "ml")


def test_invalid_field():
    lat = Lattice(3, 3)
    plan = build_oca_plan(lat, 2, 1)
    with pytest.raises(LatticeError):
        oca_log_likelihood(np.full(9, 2), 0.3, plan, 2)
    with pytest.raises(LatticeError):
        oca_log_likelihood(np.zeros(8, dtype=int), 0.3, plan, 2)
