import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_row_counts
from mhaug.data import gen_complete, gen_path
from mhaug.distributions import EntropyVector, ProposalParams, Target, TargetParams
from mhaug.graph import Graph, PropagationCache, make_state
from mhaug.oracle import (
    OracleSizeError,
    StateRecorder,
    change_ratio_histogram,
    detailed_balance_violation,
    empirical_distribution,
    enumerate_target,
    exact_edge_drop_marginals,
    exact_kernel,
    exact_ratio_distribution,
    stationarity_violation,
    tv_distance,
)
from mhaug.sampler import ChainConfig, run_chain

TRIANGLE = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


class TestEnumerate:
    def test_zero_lambda_uniform(self):
        table = enumerate_target(gen_complete(4), TargetParams(lam=(0, 0, 0, 0)))
        assert np.allclose(table.probs, 1 / 64, rtol=1e-12)

    def test_single_edge_two_states(self):
        g = Graph.from_edges(2, [(0, 1)])
        tp = TargetParams(mu_e=0.0, sigma_e_coeffs=(0.0, 0.05), lam=(1, 1, 0, 0))
        table = enumerate_target(g, tp)
        keep, dropped = table.probs[1], table.probs[0]
        assert keep > 1e6 * dropped
        cache = PropagationCache(g)
        t = Target(tp, 1, 2, nodes=False)
        lp_keep = t(make_state(g, [True], [True, True], cache, nodes=False))
        lp_drop = t(make_state(g, [False], [True, True], cache, nodes=False))
        assert keep / dropped == pytest.approx(math.exp(lp_keep - lp_drop), rel=1e-10)

    def test_k4_normalized(self):
        table = enumerate_target(gen_complete(4), TargetParams())
        assert table.num_states == 64
        assert abs(table.probs.sum() - 1) <= 1e-12

    def test_matches_scalar_target(self, rng):
        g = Graph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)])
        eps = EntropyVector(rng.uniform(0, 1, 5))
        tp = TargetParams(sigma_e_coeffs=(0.3, 0.1))
        table = enumerate_target(g, tp, eps)
        t = Target(tp, 6, 5, eps, nodes=False)
        cache = PropagationCache(g)
        for b in range(64):
            keep = np.array([(b >> j) & 1 for j in range(6)], bool)
            assert table.index(keep) == b
            s = make_state(g, keep, np.ones(5, bool), cache, nodes=False)
            assert table.log_unnorm[b] == pytest.approx(t(s), rel=1e-12, abs=1e-12)

    def test_size_refusal(self):
        with pytest.raises(OracleSizeError):
            enumerate_target(gen_complete(7), TargetParams())
        with pytest.raises(OracleSizeError):
            exact_kernel(enumerate_target(gen_complete(6), TargetParams(lam=(0, 0, 0, 0))), ProposalParams())


def random_config(r):
    tp = TargetParams(mu_e=float(r.uniform(0, 1)),
                      sigma_e_coeffs=(float(r.uniform(0, 1)), float(r.uniform(0.05, 1))),
                      lam=(float(r.uniform(0, 2)), float(r.uniform(0, 2)), 0, 0))
    return tp, ProposalParams(float(r.uniform(0.01, 1)), 0.1)


class TestKernel:
    @settings(max_examples=40, deadline=None)
    @given(st.sampled_from(["path3", "path4", "triangle", "star3"]), st.integers(0, 2**32 - 1))
    def test_lemma_properties(self, name, seed):
        g = {"path3": gen_path(3), "path4": gen_path(4), "triangle": TRIANGLE,
             "star3": Graph.from_edges(4, [(0, 1), (0, 2), (0, 3)])}[name]
        r = np.random.default_rng(seed)
        tp, pp = random_config(r)
        eps = EntropyVector(r.uniform(0, math.log(3), g.num_nodes))
        table = enumerate_target(g, tp, eps, k=int(r.integers(1, 3)))
        kernel = exact_kernel(table, pp)
        assert np.all(kernel >= 0)
        assert np.max(np.abs(kernel.sum(axis=1) - 1)) <= 1e-12
        assert detailed_balance_violation(table.probs, kernel) <= 1e-12
        assert stationarity_violation(table.probs, kernel) <= 1e-10

    def test_off_diagonal_formula(self):
        table = enumerate_target(gen_path(3), TargetParams(sigma_e_coeffs=(0, 0.3)))
        pp = ProposalParams(0.4, 0.4)
        kernel = exact_kernel(table, pp)

        def q(y, x):
            jx, jy = table.n_drop[x], table.n_drop[y]
            w = np.exp(-0.5 * ((np.arange(3) - jx) / (2 * 0.4)) ** 2)
            return w[jy] / w.sum() / math.comb(2, jy)
        p = np.exp(table.log_unnorm)
        for x, y in itertools.permutations(range(4), 2):
            expect = q(y, x) * min(1.0, p[y] * q(x, y) / (p[x] * q(y, x)))
            assert kernel[x, y] == pytest.approx(expect, rel=1e-12)


class TestEmpirical:
    def test_identity_record(self):
        g = gen_complete(4)
        rec = StateRecorder(6, 4)
        cache = PropagationCache(g)
        rec(0, make_state(g, np.ones(6, bool), np.ones(4, bool), cache))
        freq = empirical_distribution(rec.bitmasks, 6)
        assert freq[63] == 1.0 and freq.sum() == 1.0
        hist = change_ratio_histogram(rec.n_drop_e, 6)
        assert hist[0] == 1 and hist.sum() == 1

    def test_tv(self):
        assert tv_distance([1, 0], [0, 1]) == 1.0
        assert tv_distance([0.5, 0.5], [0.5, 0.5]) == 0.0

    def test_normalized_flat_histogram(self):
        g = gen_complete(4)
        tp = TargetParams(lam=(0, 1, 0, 0))
        table = enumerate_target(g, tp)
        assert np.allclose(exact_ratio_distribution(table), 1 / 7, rtol=1e-12)
        rec = StateRecorder(6, 4, keep_bitmasks=False)
        run_chain(g, ChainConfig(seed=11, burn_in=1000, num_samples=100000, node_aug=False, target=tp,
                                 proposal=ProposalParams(0.2, 0.2)), rec)
        hist = change_ratio_histogram(rec.n_drop_e, 6)
        assert hist.max() / hist.min() <= 1.5

    def test_unnormalized_mode_at_half(self):
        g = gen_complete(20)
        rec = StateRecorder(g.num_edges, 20, keep_bitmasks=False)
        run_chain(g, ChainConfig(seed=2, burn_in=2000, num_samples=20000, node_aug=False,
                                 target=TargetParams(lam=(0, 0, 0, 0)), proposal=ProposalParams(0.1, 0.1)),
                  rec)
        hist = change_ratio_histogram(rec.n_drop_e, g.num_edges)
        # smooth over a 5-bin window before locating the mode
        smooth = np.convolve(hist, np.ones(5), mode="same")
        assert abs(np.argmax(smooth) / g.num_edges - 0.5) <= 0.03

    def test_edge_marginals_k4_uniform(self):
        table = enumerate_target(gen_complete(4), TargetParams(sigma_e_coeffs=(0, 0.2)))
        marg = exact_edge_drop_marginals(table)
        assert np.allclose(marg, marg[0], rtol=1e-12)
        keep = table.keep_matrix()
        assert marg[0] == pytest.approx(float(table.probs @ ~keep[:, 0]), rel=1e-12)

    def test_tv_shrinks_with_samples(self):
        tp = TargetParams(mu_e=0.3, sigma_e_coeffs=(0.0, 0.2), lam=(1, 1, 0, 0))
        exact = enumerate_target(TRIANGLE, tp).probs
        tvs = []
        for seed in range(10):
            rec = StateRecorder(3, 3)
            run_chain(TRIANGLE, ChainConfig(seed=seed, burn_in=0, num_samples=100000, node_aug=False,
                                            target=tp, proposal=ProposalParams(0.3, 0.3)), rec)
            b = np.array(rec.bitmasks)
            tvs.append([tv_distance(empirical_distribution(b[:n], 3), exact) for n in (1000, 10000, 100000)])
        med = np.median(tvs, axis=0)
        assert med[0] > med[1] > med[2]


def joint_exact(graph, tp, k):
    """Independent joint edge x node enumeration from the closed-form target."""
    m, n = graph.num_edges, graph.num_nodes
    base = dense_row_counts(graph, np.ones(m, bool), k)
    se, sv = tp.sigma_e_coeffs[1], tp.sigma_v_coeffs[1]
    l1, l2, l3, l4 = tp.lam
    logp = {}
    for eb in range(1 << m):
        ek = np.array([(eb >> j) & 1 for j in range(m)], bool)
        ego_e = 1 - dense_row_counts(graph, ek, k) / base
        for nb in range(1 << n):
            nk = np.array([(nb >> i) & 1 for i in range(n)], int)
            ego_v = 1 - dense_row_counts(graph, np.ones(m, bool), k, nk) / base
            logp[eb, nb] = (-l1 * np.sum((ego_e - tp.mu_e) ** 2) / (2 * se**2)
                            - l2 * math.log(math.comb(m, m - int(ek.sum())))
                            - l3 * np.sum((ego_v - tp.mu_v) ** 2) / (2 * sv**2)
                            - l4 * math.log(math.comb(n, n - int(nk.sum()))))
    keys = list(logp)
    v = np.array([logp[key] for key in keys])
    p = np.exp(v - v.max())
    return keys, p / p.sum()


def test_joint_edge_node_chain_matches_enumeration():
    g = gen_path(4)  # 3 edges + 4 nodes = 7 bits, 128 states
    tp = TargetParams(mu_e=0.3, mu_v=0.2, sigma_e_coeffs=(0.0, 0.3), sigma_v_coeffs=(0.0, 0.3))
    keys, exact = joint_exact(g, tp, 2)
    index = {key: i for i, key in enumerate(keys)}
    counts = np.zeros(len(keys))
    wv = 1 << np.arange(4)

    def sink(i, s):
        counts[index[s.edge_bitmask(), int(s.node_keep @ wv)]] += 1
    run_chain(g, ChainConfig(seed=21, burn_in=2000, num_samples=200000, target=tp,
                             proposal=ProposalParams(0.3, 0.3)), sink,
              entropy=EntropyVector(np.zeros(4)))
    assert tv_distance(counts / counts.sum(), exact) <= 0.03
