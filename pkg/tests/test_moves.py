import math

import numpy as np
import pytest

from panelms.dataset import LatentStates
from panelms.moves import (
    TransitionStats,
    draw_phi,
    draw_psi,
    draw_sigma,
    draw_tau,
    interaction_target_logpdf,
    mh_interaction,
    mh_transition_row,
    posterior_coef_moments,
    transition_row_target_logpdf,
    transition_stats,
)
from panelms.model import FIN
from panelms.params import default_prior

from test_model import make_dataset, make_params

THIRDS = np.array([1 / 3, 1 / 3, 1 / 3])


def empty_stats():
    return TransitionStats(
        origin=np.empty(0, dtype=np.int64), dest=np.empty(0, dtype=np.int64),
        b=np.empty(0), m2=np.empty(0), counts=np.zeros((2, 2), dtype=np.int64))


def frozen_stats(rng, t_len=30, persist=0.8):
    path = [1]
    for _ in range(t_len - 1):
        stay = rng.random() < persist
        path.append(path[-1] if stay else 3 - path[-1])
    path = np.array(path, dtype=np.int64)
    return TransitionStats(
        origin=path[:-1], dest=path[1:],
        b=rng.integers(0, 2, size=t_len - 1).astype(float),
        m2=rng.integers(0, 4, size=t_len - 1) / 3.0,
        counts=np.array([[np.count_nonzero((path[:-1] == l) & (path[1:] == k))
                          for k in (1, 2)] for l in (1, 2)], dtype=np.int64))


class TestDrawPsi:
    def test_empty_allocation_returns_prior(self, rng):
        ds = make_dataset(10, 1, rng, m=2)
        ds.z_bc[:, 0, 1] = rng.normal(size=10)
        prior = default_prior(1, 2, 1, coef_mean=1.5, coef_var=4.0)
        states = LatentStates(np.full((10, 1), 2, dtype=int), np.ones(10, dtype=int))
        g = np.random.default_rng(3)
        draws = np.array([draw_psi(ds, states, np.array([[0.5, 0.5]]), prior, 0, 1, g)
                          for _ in range(30000)])
        assert np.allclose(draws.mean(axis=0), [1.5, 1.5], atol=4 * 2.0 / math.sqrt(30000))
        assert np.allclose(draws.var(axis=0), [4.0, 4.0], rtol=0.05)

    def test_vague_prior_matches_ols(self, rng):
        t_len = 400
        ds = make_dataset(t_len, 1, rng, m=2)
        ds.z_bc[:, 0, 1] = rng.normal(size=t_len)
        true_coef = np.array([0.3, -0.7])
        sigma = 0.6
        ds.y[:, 0] = ds.z_bc[:, 0, :] @ true_coef + sigma * rng.standard_normal(t_len)
        prior = default_prior(1, 2, 1, coef_var=1e6)
        states = LatentStates(np.ones((t_len, 1), dtype=int), np.ones(t_len, dtype=int))
        z = ds.z_bc[:, 0, :]
        ols = np.linalg.solve(z.T @ z, z.T @ ds.y[:, 0])
        se = sigma * np.sqrt(np.diag(np.linalg.inv(z.T @ z)))
        mean, _ = posterior_coef_moments(z, ds.y[:, 0], sigma,
                                         prior.psi_mean[0, 0], prior.psi_cov[0, 0])
        assert np.all(np.abs(mean - ols) < 3 * se)

    def test_hand_built_two_by_two_precision(self, rng):
        ds = make_dataset(6, 1, rng, m=2)
        ds.z_bc[:, 0, 1] = np.array([0.5, -1.0, 2.0, 0.0, 1.0, -0.5])
        sigma = 0.9
        prior = default_prior(1, 2, 1, coef_mean=0.2, coef_var=2.0)
        states = LatentStates(np.array([[1], [1], [2], [1], [2], [1]]),
                              np.ones(6, dtype=int))
        sel = states.s_y[:, 0] == 1
        z = ds.z_bc[sel, 0, :]
        yv = ds.y[sel, 0]
        # independent recomputation of the printed posterior formulas
        prec = np.linalg.inv(np.eye(2) * 2.0) + z.T @ z / sigma**2
        cov_want = np.linalg.inv(prec)
        mean_want = cov_want @ (np.linalg.inv(np.eye(2) * 2.0) @ np.full(2, 0.2)
                                + z.T @ yv / sigma**2)
        mean_got, cov_got = posterior_coef_moments(z, yv, sigma, prior.psi_mean[0, 0],
                                                   prior.psi_cov[0, 0])
        assert np.allclose(mean_got, mean_want, atol=1e-12)
        assert np.allclose(cov_got, cov_want, atol=1e-12)
        g = np.random.default_rng(5)
        sig = np.array([[sigma, sigma]])
        draws = np.array([draw_psi(ds, states, sig, prior, 0, 1, g) for _ in range(40000)])
        assert np.allclose(draws.mean(axis=0), mean_want, atol=5e-2)
        assert np.allclose(np.cov(draws.T), cov_want, atol=5e-2)


class TestDrawPhi:
    def test_empty_allocation_returns_prior(self, rng):
        ds = make_dataset(8, 1, rng, m_f=1)
        prior = default_prior(1, 1, 1, coef_mean=-0.5, coef_var=9.0)
        states = LatentStates(np.ones((8, 1), dtype=int), np.full(8, 2, dtype=int))
        g = np.random.default_rng(4)
        draws = np.array([draw_phi(ds, states, np.array([1.0, 1.0]), prior, 1, g)[0]
                          for _ in range(30000)])
        assert abs(draws.mean() + 0.5) < 4 * 3.0 / math.sqrt(30000)
        assert abs(draws.var() - 9.0) / 9.0 < 0.05

    def test_vague_prior_matches_ols(self, rng):
        t_len = 300
        ds = make_dataset(t_len, 1, rng, m_f=2)
        ds.z_fc[:, 1] = rng.normal(size=t_len)
        tau = 0.4
        ds.x[:] = ds.z_fc @ np.array([0.1, 0.9]) + tau * rng.standard_normal(t_len)
        prior = default_prior(1, 1, 2, coef_var=1e6)
        mean, _ = posterior_coef_moments(ds.z_fc, ds.x, tau,
                                         prior.phi_mean[0], prior.phi_cov[0])
        ols = np.linalg.solve(ds.z_fc.T @ ds.z_fc, ds.z_fc.T @ ds.x)
        se = tau * np.sqrt(np.diag(np.linalg.inv(ds.z_fc.T @ ds.z_fc)))
        assert np.all(np.abs(mean - ols) < 3 * se)


class TestDrawScales:
    def test_empty_allocation_is_prior(self, rng):
        # shape 6 keeps the fourth moment finite so the sample variance is stable
        ds = make_dataset(10, 1, rng)
        prior = default_prior(1, 1, 1, ig_shape=6.0, ig_rate=2.0)
        states = LatentStates(np.full((10, 1), 2, dtype=int), np.ones(10, dtype=int))
        g = np.random.default_rng(6)
        psi = np.zeros((1, 2, 1))
        var_draws = np.array(
            [draw_sigma(ds, states, psi, prior, 0, 1, g) ** 2 for _ in range(100000)])
        # IG(6, 2): mean 0.4, variance 0.04
        assert abs(var_draws.mean() - 0.4) / 0.4 < 0.01
        assert abs(var_draws.var() - 0.04) / 0.04 < 0.08

    def test_zero_residuals_updates_shape_only(self, rng):
        # ten allocated points with exact fit: variance posterior IG(a + 5, b)
        ds = make_dataset(10, 1, rng)
        psi = np.zeros((1, 2, 1))
        psi[0, 0, 0] = 0.77
        ds.y[:, 0] = 0.77
        prior = default_prior(1, 1, 1, ig_shape=3.0, ig_rate=0.5)
        states = LatentStates(np.ones((10, 1), dtype=int), np.ones(10, dtype=int))
        g = np.random.default_rng(7)
        var_draws = np.array(
            [draw_sigma(ds, states, psi, prior, 0, 1, g) ** 2 for _ in range(100000)])
        a, b = 3.0 + 5.0, 0.5
        assert abs(var_draws.mean() - b / (a - 1)) / (b / (a - 1)) < 0.01
        want_var = b**2 / ((a - 1) ** 2 * (a - 2))
        assert abs(var_draws.var() - want_var) / want_var < 0.05

    def test_fixed_residual_fixture_matches_analytic_mean(self, rng):
        t_len = 14
        ds = make_dataset(t_len, 1, rng)
        psi = np.zeros((1, 2, 1))
        resid = rng.normal(scale=0.8, size=t_len)
        ds.y[:, 0] = resid
        prior = default_prior(1, 1, 1, ig_shape=2.5, ig_rate=0.5)
        states = LatentStates(np.ones((t_len, 1), dtype=int), np.ones(t_len, dtype=int))
        g = np.random.default_rng(8)
        var_draws = np.array(
            [draw_sigma(ds, states, psi, prior, 0, 1, g) ** 2 for _ in range(100000)])
        a = 2.5 + t_len / 2
        b = 0.5 + 0.5 * float(resid @ resid)
        assert abs(var_draws.mean() - b / (a - 1)) / (b / (a - 1)) < 0.01

    def test_tau_mirrors_sigma(self, rng):
        ds = make_dataset(12, 1, rng)
        phi = np.zeros((2, 1))
        phi[1, 0] = -0.3
        ds.x[:] = -0.3
        prior = default_prior(1, 1, 1, ig_shape=4.0, ig_rate=1.0)
        states = LatentStates(np.ones((12, 1), dtype=int), np.full(12, 2, dtype=int))
        g = np.random.default_rng(9)
        var_draws = np.array(
            [draw_tau(ds, states, phi, prior, 2, g) ** 2 for _ in range(60000)])
        a, b = 4.0 + 6.0, 1.0
        assert abs(var_draws.mean() - b / (a - 1)) / (b / (a - 1)) < 0.01


class TestMhTransitionRow:
    def test_alpha_one_always_accepts(self, rng):
        stats = frozen_stats(rng)
        interaction = np.array([1.0, 0.0, 0.0])
        delta = np.array([1.0, 1.0])
        row = np.array([0.5, 0.5])
        g = np.random.default_rng(10)
        for _ in range(300):
            row, accepted = mh_transition_row(row, stats, interaction, delta, 1, g)
            assert accepted

    def test_acceptance_rate_reasonable(self, rng):
        stats = frozen_stats(rng)
        interaction = np.array([0.8, 0.1, 0.1])
        delta = np.array([2.0, 2.0])
        row = np.array([0.5, 0.5])
        g = np.random.default_rng(11)
        accepted = 0
        n = 4000
        for _ in range(n):
            row, acc = mh_transition_row(row, stats, interaction, delta, 1, g)
            accepted += acc
        assert 0.1 < accepted / n <= 1.0

    def test_stationary_frequencies_match_target_bins(self, rng):
        # frozen target, three coarse bins, quadrature of the unnormalized target
        stats = frozen_stats(rng, t_len=18)
        interaction = np.array([0.85, 0.05, 0.10])
        delta = np.array([2.0, 3.0])
        edges = np.array([0.0, 1 / 3, 2 / 3, 1.0])
        grid = np.linspace(1e-6, 1 - 1e-6, 6000)
        logf = np.array([transition_row_target_logpdf(np.array([p, 1 - p]), stats,
                                                      interaction, delta, 1)
                         for p in grid])
        w = np.exp(logf - logf.max())
        w /= w.sum()
        want = np.array([w[(grid >= lo) & (grid < hi)].sum()
                         for lo, hi in zip(edges[:-1], edges[1:])])
        g = np.random.default_rng(12)
        row = np.array([0.5, 0.5])
        samples = np.empty(200000)
        for s in range(len(samples)):
            row, _ = mh_transition_row(row, stats, interaction, delta, 1, g)
            samples[s] = row[0]
        got = np.histogram(samples, bins=edges)[0] / len(samples)
        assert 0.5 * np.abs(got - want).sum() < 0.02

    def test_degenerate_counts_fall_back_to_prior(self, rng):
        stats = empty_stats()
        interaction = np.array([0.9, 0.05, 0.05])
        delta = np.array([3.0, 2.0])
        g = np.random.default_rng(13)
        row = np.array([0.5, 0.5])
        draws = np.empty(20000)
        for s in range(len(draws)):
            row, _ = mh_transition_row(row, stats, interaction, delta, 1, g)
            draws[s] = row[0]
        assert abs(draws.mean() - 0.6) < 0.02   # Beta(3, 2) mean


class TestMhInteraction:
    def test_no_transitions_samples_prior(self, rng):
        stats = empty_stats()
        p_rows = np.array([[0.8, 0.2], [0.3, 0.7]])
        phi_w = np.array([8.0, 1.0, 1.0])
        g = np.random.default_rng(14)
        triple = np.array([0.8, 0.1, 0.1])
        draws = np.empty((30000, 3))
        for s in range(len(draws)):
            triple, _ = mh_interaction(triple, stats, p_rows, phi_w, 0, THIRDS, g)
            draws[s] = triple
        want_mean = phi_w / phi_w.sum()
        assert np.allclose(draws.mean(axis=0), want_mean, atol=0.02)
        want_var = want_mean * (1 - want_mean) / (phi_w.sum() + 1)
        assert np.allclose(draws.var(axis=0), want_var, rtol=0.25)

    def test_frozen_target_mean_matches_quadrature(self, rng):
        t_len = 5
        path = np.array([1, 2, 2, 1, 2], dtype=np.int64)
        stats = TransitionStats(
            origin=path[:-1], dest=path[1:],
            b=np.array([0.0, 1.0, 1.0, 0.0]),
            m2=np.array([0.5, 1.0, 0.5, 0.0]),
            counts=np.array([[0, 2], [1, 1]], dtype=np.int64))
        p_rows = np.array([[0.7, 0.3], [0.4, 0.6]])
        phi_w = np.array([4.0, 2.0, 2.0])
        step = 1.0 / 300
        axis = np.arange(step / 2, 1.0, step)
        total_w = 0.0
        mean_acc = np.zeros(3)
        for a in axis:
            for b in axis:
                gpart = 1.0 - a - b
                if gpart <= 0:
                    continue
                lw = interaction_target_logpdf(np.array([a, b, gpart]), stats, p_rows, phi_w)
                w = math.exp(lw)
                total_w += w
                mean_acc += w * np.array([a, b, gpart])
        want_mean = mean_acc / total_w
        g = np.random.default_rng(15)
        triple = np.array([0.6, 0.2, 0.2])
        draws = np.empty((150000, 3))
        for s in range(len(draws)):
            triple, _ = mh_interaction(triple, stats, p_rows, phi_w, t_len, THIRDS, g)
            draws[s] = triple
        assert np.all(np.abs(draws.mean(axis=0) - want_mean) < 0.02)

    def test_proposals_stay_on_simplex(self, rng):
        stats = frozen_stats(rng)
        p_rows = np.array([[0.9, 0.1], [0.2, 0.8]])
        phi_w = np.array([8.0, 1.0, 1.0])
        g = np.random.default_rng(16)
        triple = np.array([0.8, 0.1, 0.1])
        for _ in range(2000):
            triple, _ = mh_interaction(triple, stats, p_rows, phi_w, 30, THIRDS, g)
            assert triple.shape == (3,)
            assert abs(triple.sum() - 1.0) < 1e-12
            assert np.all(triple >= 0) and triple[0] > 0


class TestTransitionStats:
    def test_counts_and_arrays(self, rng):
        ds = make_dataset(5, 2, rng)
        states = LatentStates(
            np.array([[1, 2], [2, 2], [2, 1], [1, 1], [2, 1]]),
            np.array([1, 2, 2, 1, 1]))
        stats = transition_stats(states, 0)
        assert np.array_equal(stats.origin, [1, 2, 2, 1])
        assert np.array_equal(stats.dest, [2, 2, 1, 2])
        assert np.array_equal(stats.b, [0.0, 1.0, 1.0, 0.0])
        assert np.allclose(stats.m2, [0.5, 1.0, 0.5, 0.0])
        assert np.array_equal(stats.counts, [[0, 2], [1, 1]])
        stats_fin = transition_stats(states, FIN)
        assert np.array_equal(stats_fin.origin, [1, 2, 2, 1])
        assert np.array_equal(stats_fin.dest, [2, 2, 1, 1])
