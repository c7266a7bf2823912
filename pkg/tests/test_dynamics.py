import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netprotect import (Digraph, GSEIVParams, SpreadingParams, build_digraph, extinction_times,
                        fit_decay_rate, gseiv_is_stable, gseiv_matrix, gseiv_meanfield,
                        meanfield_simulate, read_trajectory_csv, stability_margin,
                        stochastic_simulate, worst_case_graph, write_event_log_csv,
                        write_trajectory_csv)
from netprotect.exceptions import DomainError, StepSizeError

from helpers import dense_abscissa, random_strong_digraph


def cycle(m):
    return build_digraph([(k, (k + 1) % m, 1.0) for k in range(m)], node_count=m)


# -- stability margin ---------------------------------------------------------

def test_margin_no_coupling():
    g = Digraph(4)
    assert stability_margin(SpreadingParams.from_graph(g, 0.0, 0.3)) == pytest.approx(0.3)


def test_margin_worst_case_unprotected():
    g = worst_case_graph(3, 6)
    p = SpreadingParams.from_graph(g, 0.5, 0.3, node_level=True)
    assert stability_margin(p) == pytest.approx(-0.2, abs=1e-10)


def test_margin_mixed_cycle():
    g = cycle(6)
    rates = np.array([0.01, 0.5, 0.01, 0.5, 0.01, 0.5])
    p = SpreadingParams.from_graph(g, rates, 0.3, node_level=True)
    # frozen dense-eigensolver value: 0.3 - (0.01^3 0.5^3)^(1/6)
    assert stability_margin(p) == pytest.approx(0.229289321881345, abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_margin_monotone_in_rates(n, seed):
    rng = np.random.default_rng(seed)
    g = random_strong_digraph(rng, n)
    beta = rng.uniform(0.05, 0.5, g.edge_count)
    delta = rng.uniform(0.1, 0.6, n)
    base = stability_margin(SpreadingParams.from_graph(g, beta, delta))
    b2 = beta.copy()
    b2[int(rng.integers(g.edge_count))] *= 1.5
    d2 = delta.copy()
    d2[int(rng.integers(n))] *= 1.5
    assert stability_margin(SpreadingParams.from_graph(g, b2, delta)) <= base + 1e-10
    assert stability_margin(SpreadingParams.from_graph(g, beta, d2)) >= base - 1e-10


def test_params_validation():
    g = cycle(3)
    with pytest.raises(DomainError):
        SpreadingParams.from_graph(g, 0.1, [0.3, -0.1, 0.3])


# -- mean-field ---------------------------------------------------------------

def test_meanfield_pure_decay():
    g = Digraph(3)
    delta = np.array([0.2, 0.5, 1.3])
    p0 = np.array([0.9, 0.4, 1.0])
    params = SpreadingParams.from_graph(g, 0.0, delta)
    for i in range(3):
        t_end = 1.0 / delta[i]
        traj = meanfield_simulate(params, p0, t_end, step=1e-3)
        assert traj.times[-1] == pytest.approx(t_end, abs=1e-12)
        assert traj.final[i] == pytest.approx(p0[i] * math.exp(-1.0), abs=1e-6)


def test_meanfield_zero_is_invariant():
    params = SpreadingParams.from_graph(cycle(5), 0.8, 0.1)
    traj = meanfield_simulate(params, np.zeros(5), 10.0)
    assert not traj.values.any()


def test_meanfield_stays_in_unit_box():
    rng = np.random.default_rng(4)
    g = random_strong_digraph(rng, 10)
    params = SpreadingParams.from_graph(g, 2.0, 0.1)
    traj = meanfield_simulate(params, rng.uniform(0, 1, 10), 20.0)
    assert traj.values.min() >= 0 and traj.values.max() <= 1
    assert np.all(np.diff(traj.times) > 0)


def test_meanfield_step_too_large():
    params = SpreadingParams.from_graph(Digraph(1), 0.0, 50.0)
    with pytest.raises(StepSizeError):
        meanfield_simulate(params, [1.0], 2.0, step=0.5)


def test_rk4_order():
    g = random_strong_digraph(np.random.default_rng(2), 5)
    params = SpreadingParams.from_graph(g, 0.6, 0.4)
    p0 = np.full(5, 0.7)
    ends = [meanfield_simulate(params, p0, 2.0, step=h).final for h in (0.2, 0.1, 0.05)]
    order = math.log2(np.abs(ends[0] - ends[1]).max() / np.abs(ends[1] - ends[2]).max())
    assert order >= 3.5


def test_decay_rate_regression():
    g = random_strong_digraph(np.random.default_rng(12), 8)
    params = SpreadingParams.from_graph(g, 0.05, 0.4)
    eps = stability_margin(params)
    assert eps > 0.05
    traj = meanfield_simulate(params, np.ones(8), 20.0 / eps, record_every=10)
    rate, k = fit_decay_rate(traj)
    assert rate >= eps - 0.02
    # the fitted envelope bounds the second half of the trajectory
    norms = np.linalg.norm(traj.values, axis=1)
    half = traj.times >= traj.times[-1] / 2
    bound = norms[0] * k * np.exp(-(rate - 1e-3) * traj.times[half])
    assert np.all(norms[half] <= bound * 1.05)


def test_trajectory_csv_roundtrip(tmp_path):
    params = SpreadingParams.from_graph(cycle(4), 0.3, 0.2)
    traj = meanfield_simulate(params, np.full(4, 0.5), 1.0, step=0.01)
    write_trajectory_csv(traj, tmp_path / "t.csv", {"seed": 5})
    t, v = read_trajectory_csv(tmp_path / "t.csv")
    np.testing.assert_array_equal(t, traj.times)
    np.testing.assert_array_equal(v, traj.values)
    assert (tmp_path / "t.csv.meta.json").exists()


# -- stochastic ---------------------------------------------------------------

def test_single_node_recovery_time():
    params = SpreadingParams.from_graph(Digraph(1), 0.0, 0.3)
    times = extinction_times(params, np.array([1]), 1e6, 10000, seed=1)
    se = times.std(ddof=1) / math.sqrt(times.size)
    assert abs(times.mean() - 1 / 0.3) <= 3 * se


def test_absorbing_state():
    params = SpreadingParams.from_graph(cycle(4), 0.5, 0.3)
    traj = stochastic_simulate(params, np.zeros(4, dtype=int), 50.0, seed=0)
    assert traj.events == []
    assert traj.meta["extinction_time"] == 0.0


def test_chain_infection_time():
    beta = 0.7
    g = build_digraph([(0, 1, 1.0)])
    params = SpreadingParams(g.adjacency() * beta, np.array([1e-9, 1.0]))
    samples = []
    for k in range(5000):
        traj = stochastic_simulate(params, np.array([1, 0]), 60.0, seed=3, trial=k)
        first = next(t for t, i, s in traj.events if i == 1 and s == 1)
        samples.append(first)
    samples = np.asarray(samples)
    se = samples.std(ddof=1) / math.sqrt(samples.size)
    assert abs(samples.mean() - 1 / beta) <= 3 * se


def test_stochastic_reproducible(tmp_path):
    params = SpreadingParams.from_graph(random_strong_digraph(np.random.default_rng(0), 6), 0.4, 0.3)
    a = stochastic_simulate(params, np.ones(6, dtype=int), 30.0, seed=9)
    b = stochastic_simulate(params, np.ones(6, dtype=int), 30.0, seed=9)
    assert a.events == b.events
    write_event_log_csv(a, tmp_path / "a.csv")
    write_event_log_csv(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_stochastic_rejects_non_binary():
    params = SpreadingParams.from_graph(cycle(3), 0.4, 0.3)
    with pytest.raises(DomainError):
        stochastic_simulate(params, np.array([0, 2, 1]), 1.0, seed=0)


def test_extinction_is_seed_deterministic():
    params = SpreadingParams.from_graph(cycle(5), 0.2, 0.5)
    a = extinction_times(params, np.ones(5, dtype=int), 100.0, 50, seed=4)
    b = extinction_times(params, np.ones(5, dtype=int), 100.0, 50, seed=4)
    np.testing.assert_array_equal(a, b)


# -- G-SEIV -------------------------------------------------------------------

def test_gseiv_two_compartment_closed_form():
    eps, delta = 0.7, 0.25
    params = GSEIVParams(Digraph(1), 0.0, 0.0, delta, eps, 0.0, 1.0)
    traj = gseiv_meanfield(params, [0.0, 1.0, 0.0, 0.0], 4.0, step=1e-3, record_every=100)
    t = traj.times
    e_ref = np.exp(-eps * t)
    i_ref = eps / (delta - eps) * (np.exp(-eps * t) - np.exp(-delta * t))
    np.testing.assert_allclose(traj.values[:, 1], e_ref, atol=1e-6)
    np.testing.assert_allclose(traj.values[:, 2], i_ref, atol=1e-6)


def test_gseiv_vigilance_balance():
    params = GSEIVParams(cycle(3), 0.2, 0.3, 0.4, 0.5, 0.8, 0.8)
    state0 = np.concatenate([np.zeros(3), np.zeros(3), np.zeros(3), np.ones(3)])
    traj = gseiv_meanfield(params, state0, 40.0)
    s, e, i, v = traj.final.reshape(4, 3)
    np.testing.assert_allclose(s, 0.5, atol=1e-9)
    np.testing.assert_allclose(v, 0.5, atol=1e-9)
    assert e.max() == 0 and i.max() == 0


def test_gseiv_conservation():
    rng = np.random.default_rng(6)
    g = random_strong_digraph(rng, 6)
    params = GSEIVParams(g, rng.uniform(0, 1, 6), rng.uniform(0, 1, 6), rng.uniform(0.1, 1, 6),
                         rng.uniform(0.1, 1, 6), rng.uniform(0, 1, 6), rng.uniform(0.1, 1, 6))
    raw = rng.uniform(0, 1, (4, 6))
    traj = gseiv_meanfield(params, raw / raw.sum(axis=0), 30.0)
    sums = traj.values.reshape(len(traj.times), 4, 6).sum(axis=1)
    assert np.abs(sums - 1).max() <= 1e-8


def test_gseiv_rejects_unnormalised():
    params = GSEIVParams(Digraph(1), 0.1, 0.1, 0.3, 0.5, 0.1, 0.1)
    with pytest.raises(DomainError):
        gseiv_meanfield(params, [0.5, 0.5, 0.5, 0.0], 1.0)


def test_gseiv_zero_transmission_stable():
    eps = np.array([0.3, 0.9, 0.5])
    delta = np.array([0.6, 0.4, 0.7])
    params = GSEIVParams(cycle(3), 0.0, 0.0, delta, eps, 0.2, 0.5)
    stable, absc = gseiv_is_stable(params)
    assert stable
    assert absc == pytest.approx(-0.3, abs=1e-10)


def test_gseiv_vigilance_suppresses():
    g = build_digraph([(0, 0, 1.0)])
    params = GSEIVParams(g, 5.0, 5.0, 0.3, 0.5, 1e9, 1.0)
    stable, absc = gseiv_is_stable(params)
    assert stable
    assert absc == pytest.approx(-0.3, abs=1e-6)


def test_gseiv_large_graph_uses_power_iteration():
    rng = np.random.default_rng(0)
    g = random_strong_digraph(rng, 210, extra=300)
    params = GSEIVParams(g, 0.01, 0.02, 0.5, 0.8, 0.1, 1.0)
    _, absc = gseiv_is_stable(params)
    assert absc == pytest.approx(dense_abscissa(gseiv_matrix(params)), abs=1e-8)


@pytest.mark.parametrize("scale", [0.5, 0.8, 1.2, 2.0])
def test_gseiv_sis_limit(scale):
    g = random_strong_digraph(np.random.default_rng(1), 6)
    delta = 0.4
    rho = float(np.abs(np.linalg.eigvals(g.adjacency(dense=True))).max())
    beta = scale * delta / rho
    sis = stability_margin(SpreadingParams.from_graph(g, beta, delta, node_level=True))
    params = GSEIVParams(g, 0.0, beta, delta, 1e3, 0.0, 1e6)
    stable, absc = gseiv_is_stable(params)
    assert stable == (sis > 0)
    assert abs(-absc - sis) <= 0.02 * abs(sis)
