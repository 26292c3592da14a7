import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from panelms.dataset import LatentStates, PanelDataset, month_range
from panelms.model import (
    FIN,
    complete_data_loglik,
    emission_logpdf,
    global_factor,
    transition_row,
)
from panelms.params import ModelParams

from oracles import single_chain_ms_loglik_path, unit_path_logweight, fin_path_logweight


def make_params(n, m=1, m_f=1, alpha=0.9, beta=0.04, gamma=0.06):
    psi = np.zeros((n, 2, m))
    psi[:, 0, 0] = -1.0
    psi[:, 1, 0] = 1.0
    phi = np.zeros((2, m_f))
    phi[0, 0], phi[1, 0] = -1.0, 1.0
    p0 = np.array([[0.9, 0.1], [0.2, 0.8]])
    params = ModelParams(
        psi=psi, sigma=np.full((n, 2), 0.8), phi=phi, tau=np.full(2, 0.8),
        p_unit=np.tile(p0, (n, 1, 1)), p_fin=p0.copy(),
        interaction_unit=np.tile([alpha, beta, gamma], (n, 1)),
        interaction_fin=np.array([alpha, beta, gamma]),
    )
    params.validate()
    return params


def make_dataset(t_len, n, rng, m=1, m_f=1):
    z_bc = np.ones((t_len, n, m))
    z_fc = np.ones((t_len, m_f))
    if m > 1:
        z_bc[:, :, 1:] = rng.normal(size=(t_len, n, m - 1))
    if m_f > 1:
        z_fc[:, 1:] = rng.normal(size=(t_len, m_f - 1))
    return PanelDataset(
        y=rng.normal(size=(t_len, n)), x=rng.normal(size=t_len),
        z_bc=z_bc, z_fc=z_fc,
        unit_labels=[f"U{i}" for i in range(n)],
        bc_names=["const"] + [f"c{j}" for j in range(1, m)],
        fc_names=["const"] + [f"f{j}" for j in range(1, m_f)],
        dates=month_range("1990-01", t_len),
    )


class TestGlobalFactor:
    def test_all_in_regime_two(self):
        assert global_factor(np.array([2, 2, 2, 2]), 2) == 1.0

    def test_direct_count(self):
        assert global_factor(np.array([1, 2, 2, 1]), 2) == 0.5

    def test_none_in_regime_two(self):
        assert global_factor(np.ones(13, dtype=int), 2) == 0.0

    def test_invalid_regime_rejected(self):
        with pytest.raises(ValueError):
            global_factor(np.array([1, 2]), 3)
        with pytest.raises(ValueError):
            global_factor(np.array([1, 0]), 2)

    @given(st.lists(st.sampled_from([1, 2]), min_size=1, max_size=30))
    def test_both_regimes_sum_to_one(self, states):
        row = np.array(states)
        assert global_factor(row, 1) + global_factor(row, 2) == 1.0


class TestTransitionRow:
    def test_fixed_transition_limit_exact(self):
        params = make_params(2, alpha=1.0, beta=0.0, gamma=0.0)
        params.p_unit[0, 0] = (0.9, 0.1)
        for s_x in (1, 2):
            for m2 in (0.0, 0.3, 1.0):
                row = transition_row(params, 0, 1, s_x, m2)
                assert row[0] == 0.9 and row[1] == 0.1

    def test_hand_arithmetic_no_beta(self):
        params = make_params(1, alpha=0.95, beta=0.0, gamma=0.05)
        params.p_unit[0, 0] = (0.9, 0.1)
        row = transition_row(params, 0, 1, 1, 1.0)
        # raw entries 0.95*0.9 + 0.05*0 and 0.95*0.1 + 0.05*1 sum to one
        assert row[0] == pytest.approx(0.855, abs=1e-15)
        assert row[1] == pytest.approx(0.145, abs=1e-15)

    def test_hand_arithmetic_with_beta(self):
        params = make_params(1, alpha=0.95, beta=0.02, gamma=0.03)
        params.p_unit[0, 0] = (0.9, 0.1)
        row = transition_row(params, 0, 1, 2, 0.5)
        raw = (0.95 * 0.9 + 0.02 + 0.03 * 0.5, 0.95 * 0.1 + 0.02 + 0.03 * 0.5)
        assert row[0] == pytest.approx(raw[0] / (raw[0] + raw[1]), abs=1e-15)
        assert row[1] == pytest.approx(raw[1] / (raw[0] + raw[1]), abs=1e-15)

    def test_financial_chain_uses_own_blocks(self):
        params = make_params(1, alpha=1.0, beta=0.0, gamma=0.0)
        params.p_fin[1] = (0.25, 0.75)
        row = transition_row(params, FIN, 2, 1, 0.0)
        assert row == pytest.approx([0.25, 0.75], abs=1e-15)

    def test_domain_errors(self):
        params = make_params(1)
        with pytest.raises(ValueError):
            transition_row(params, 0, 3, 1, 0.5)
        with pytest.raises(ValueError):
            transition_row(params, 0, 1, 0, 0.5)
        with pytest.raises(ValueError):
            transition_row(params, 0, 1, 1, 1.5)

    @given(
        alpha=st.floats(0.05, 1.0),
        beta_frac=st.floats(0.0, 1.0),
        p1=st.floats(0.0, 1.0),
        pf=st.floats(0.0, 1.0),
        s_x=st.sampled_from([1, 2]),
        m2=st.floats(0.0, 1.0),
        l=st.sampled_from([1, 2]),
    )
    @settings(max_examples=200)
    def test_row_is_distribution(self, alpha, beta_frac, p1, pf, s_x, m2, l):
        beta = (1.0 - alpha) * beta_frac
        gamma = 1.0 - alpha - beta
        params = make_params(1, alpha=alpha, beta=beta, gamma=max(gamma, 0.0))
        params.interaction_unit[0] = np.array([alpha, beta, max(gamma, 0.0)])
        params.interaction_unit[0] /= params.interaction_unit[0].sum()
        params.p_unit[0, l - 1] = (p1, 1.0 - p1)
        params.p_unit[0, 2 - l] = (pf, 1.0 - pf)
        row = transition_row(params, 0, l, s_x, m2)
        assert abs(row.sum() - 1.0) < 1e-12
        assert 0.0 < row[0] < 1.0 and 0.0 < row[1] < 1.0


class TestEmissionLogpdf:
    def test_mode_of_standard_normal(self, rng):
        ds = make_dataset(3, 2, rng)
        params = make_params(2)
        params.psi[0, 0, 0] = ds.y[1, 0]
        params.sigma[0, 0] = 1.0
        assert emission_logpdf(ds, params, 0, 1, 1) == pytest.approx(
            math.log(1.0 / math.sqrt(2 * math.pi)), abs=1e-14)

    def test_one_sigma_point(self, rng):
        ds = make_dataset(3, 1, rng)
        params = make_params(1)
        sigma = 0.37
        params.psi[0, 1, 0] = ds.y[2, 0] - sigma
        params.sigma[0, 1] = sigma
        expected = math.log(1.0 / math.sqrt(2 * math.pi)) - math.log(sigma) - 0.5
        assert emission_logpdf(ds, params, 0, 2, 2) == pytest.approx(expected, abs=1e-13)

    def test_matches_scipy_normal_oracle(self, rng):
        ds = make_dataset(12, 3, rng, m=3, m_f=2)
        params = make_params(3, m=3, m_f=2)
        params.psi[:, :, 1:] = rng.normal(size=(3, 2, 2))
        params.phi[:, 1:] = rng.normal(size=(2, 1))
        for i in range(3):
            for t in range(12):
                for k in (1, 2):
                    mean = params.psi[i, k - 1] @ ds.z_bc[t, i]
                    expected = norm.logpdf(ds.y[t, i], loc=mean, scale=params.sigma[i, k - 1])
                    assert emission_logpdf(ds, params, i, t, k) == pytest.approx(expected, abs=1e-12)
        for t in range(12):
            for k in (1, 2):
                mean = params.phi[k - 1] @ ds.z_fc[t]
                expected = norm.logpdf(ds.x[t], loc=mean, scale=params.tau[k - 1])
                assert emission_logpdf(ds, params, FIN, t, k) == pytest.approx(expected, abs=1e-12)

    def test_nonpositive_scale_rejected(self, rng):
        ds = make_dataset(3, 1, rng)
        params = make_params(1)
        params.sigma[0, 0] = 0.0
        with pytest.raises(ValueError):
            emission_logpdf(ds, params, 0, 0, 1)


class TestCompleteDataLoglik:
    def test_t1_is_pure_emission_plus_initial(self, rng):
        ds = make_dataset(1, 2, rng)
        params = make_params(2)
        states = LatentStates(np.array([[1, 2]]), np.array([2]))
        expected = 3 * math.log(0.5)
        expected += emission_logpdf(ds, params, 0, 0, 1)
        expected += emission_logpdf(ds, params, 1, 0, 2)
        expected += emission_logpdf(ds, params, FIN, 0, 2)
        assert complete_data_loglik(ds, params, states) == pytest.approx(expected, abs=1e-12)

    def test_term_by_term_oracle(self, rng):
        ds = make_dataset(3, 2, rng, m=2, m_f=2)
        params = make_params(2, m=2, m_f=2)
        params.psi[:, :, 1] = rng.normal(size=(2, 2))
        params.phi[:, 1] = rng.normal(size=2)
        states = LatentStates(rng.integers(1, 3, size=(3, 2)), rng.integers(1, 3, size=3))
        expected = 0.0
        for i in range(2):
            expected += unit_path_logweight(ds, params, states, i, tuple(states.s_y[:, i]))
        expected += fin_path_logweight(ds, params, states, tuple(states.s_x))
        assert complete_data_loglik(ds, params, states) == pytest.approx(expected, rel=1e-12)

    def test_doubling_sigma_away_from_optimum_decreases_loglik(self, rng):
        ds = make_dataset(6, 1, rng)
        params = make_params(1)
        states = LatentStates(np.ones((6, 1), dtype=int), np.ones(6, dtype=int))
        # put the scales at their maximum-likelihood values given the residuals
        params.sigma[0, :] = np.sqrt(np.mean((ds.y[:, 0] - params.psi[0, 0, 0]) ** 2))
        params.tau[:] = np.sqrt(np.mean((ds.x - params.phi[0, 0]) ** 2))
        base = complete_data_loglik(ds, params, states)
        wide = params.copy()
        wide.sigma = params.sigma * 2
        wide.tau = params.tau * 2
        assert complete_data_loglik(ds, wide, states) < base

    def test_label_swap_invariance_when_gamma_zero(self, rng):
        # with all gamma = 0 the cross-chain factor is inactive and relabeling
        # one unit (parameters + rows/cols + trajectory) leaves the density fixed
        ds = make_dataset(8, 3, rng)
        params = make_params(3, alpha=0.9, beta=0.1, gamma=0.0)
        states = LatentStates(rng.integers(1, 3, size=(8, 3)), rng.integers(1, 3, size=8))
        base = complete_data_loglik(ds, params, states)
        swapped = params.copy()
        swapped.swap_unit_regimes(1)
        states2 = states.copy()
        states2.s_y[:, 1] = 3 - states2.s_y[:, 1]
        assert complete_data_loglik(ds, swapped, states2) == pytest.approx(base, rel=1e-12)

    def test_alpha_one_equals_independent_chains(self, rng):
        ds = make_dataset(10, 2, rng)
        params = make_params(2, alpha=1.0, beta=0.0, gamma=0.0)
        states = LatentStates(rng.integers(1, 3, size=(10, 2)), rng.integers(1, 3, size=10))
        expected = 0.0
        for i in range(2):
            expected += single_chain_ms_loglik_path(
                ds.y[:, i], ds.z_bc[:, i, :], tuple(states.s_y[:, i]),
                params.psi[i], params.sigma[i], params.p_unit[i])
        expected += single_chain_ms_loglik_path(
            ds.x, ds.z_fc, tuple(states.s_x), params.phi, params.tau, params.p_fin)
        assert complete_data_loglik(ds, params, states) == pytest.approx(expected, rel=1e-11)

    def test_dimension_mismatch_rejected(self, rng):
        ds = make_dataset(4, 2, rng)
        params = make_params(2)
        states = LatentStates(np.ones((5, 2), dtype=int), np.ones(5, dtype=int))
        with pytest.raises(ValueError):
            complete_data_loglik(ds, params, states)


class TestInvariants:
    def test_dataset_rejects_nonfinite(self, rng):
        ds = make_dataset(4, 2, rng)
        y = ds.y.copy()
        y[1, 0] = np.nan
        with pytest.raises(ValueError):
            PanelDataset(y, ds.x, ds.z_bc, ds.z_fc, ds.unit_labels,
                         ds.bc_names, ds.fc_names, ds.dates)

    def test_dataset_rejects_bad_intercept(self, rng):
        ds = make_dataset(4, 2, rng)
        z = ds.z_bc.copy()
        z[0, 0, 0] = 2.0
        with pytest.raises(ValueError):
            PanelDataset(ds.y, ds.x, z, ds.z_fc, ds.unit_labels,
                         ds.bc_names, ds.fc_names, ds.dates)

    def test_dataset_rejects_nonconsecutive_dates(self, rng):
        ds = make_dataset(4, 2, rng)
        dates = ds.dates.copy()
        dates[2] += 1
        with pytest.raises(ValueError):
            PanelDataset(ds.y, ds.x, ds.z_bc, ds.z_fc, ds.unit_labels,
                         ds.bc_names, ds.fc_names, dates)

    def test_states_reject_other_labels(self):
        with pytest.raises(ValueError):
            LatentStates(np.array([[1, 3]]), np.array([1]))

    def test_params_identification_check(self):
        params = make_params(2)
        params.psi[1, 0, 0] = 2.0  # above the regime-2 intercept
        with pytest.raises(ValueError):
            params.validate()
        params.validate(identified=False)

    def test_params_simplex_checks(self):
        params = make_params(1)
        params.interaction_unit[0] = (0.5, 0.2, 0.2)
        with pytest.raises(ValueError):
            params.validate()
        params = make_params(1)
        params.p_fin[0] = (0.7, 0.6)
        with pytest.raises(ValueError):
            params.validate()
