import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize, stats

from baoi.model_core import (
    InfeasibleRegime,
    NetworkParams,
    avg_collision_prob,
    avg_collision_prob_series,
    neighbor_pmf,
    p_cl_given_neighbors,
    p_tx_of_collision,
    service_pmf,
    solve_fixed_point,
)

from _oracles import avg_collision_series, bianchi_tx


class TestNetworkParams:
    def test_defaults(self):
        p = NetworkParams(0.2)
        assert (p.transmit_range, p.w_min, p.frame_length) == (4.0, 16, 50)
        assert p.lambda_nb == pytest.approx(0.2 * math.pi * 16)

    @pytest.mark.parametrize(
        "kw",
        [
            dict(density=0.0),
            dict(density=-1.0),
            dict(density=float("inf")),
            dict(density=0.1, transmit_range=0.0),
            dict(density=0.1, w_min=1),
            dict(density=0.1, w_min=2.5),
            dict(density=0.1, frame_length=0),
        ],
    )
    def test_rejects_invalid(self, kw):
        with pytest.raises(ValueError):
            NetworkParams(**kw)


class TestTransmissionProbability:
    def test_collision_free(self):
        assert p_tx_of_collision(0.0, 16) == pytest.approx(2 / 17, abs=1e-15)

    def test_quarter(self):
        assert p_tx_of_collision(0.25, 16) == pytest.approx(0.08, abs=1e-15)

    @pytest.mark.parametrize("p_cl", [0.5, 0.7, -0.1])
    def test_domain(self, p_cl):
        with pytest.raises(InfeasibleRegime):
            p_tx_of_collision(p_cl, 16)

    @pytest.mark.parametrize("p_cl", [0.0, 0.1, 0.3, 0.45, 0.49])
    @pytest.mark.parametrize("w_min", [2, 16, 32, 1024])
    def test_matches_backoff_renewal_oracle(self, p_cl, w_min):
        assert p_tx_of_collision(p_cl, w_min) == pytest.approx(bianchi_tx(p_cl, w_min), rel=1e-12)

    @given(
        st.floats(0.0, 0.499, allow_nan=False),
        st.floats(0.0, 0.499, allow_nan=False),
        st.integers(2, 512),
    )
    def test_decreasing_in_collision(self, a, b, w):
        if abs(a - b) < 1e-9:
            return
        lo, hi = sorted((a, b))
        assert p_tx_of_collision(hi, w) < p_tx_of_collision(lo, w)

    @given(st.floats(0.0, 0.499), st.integers(2, 511))
    def test_decreasing_in_window(self, p, w):
        assert p_tx_of_collision(p, w + 1) < p_tx_of_collision(p, w)


class TestCollisionGivenNeighbors:
    @pytest.mark.parametrize(
        "p, n, expected",
        [(0.3, 1, 0.0), (0.1, 3, 0.19), (1.0, 2, 1.0), (0.5, 0, 0.0), (0.0, 10, 0.0)],
    )
    def test_examples(self, p, n, expected):
        assert p_cl_given_neighbors(p, n) == pytest.approx(expected, abs=1e-15)

    @given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 60), st.integers(0, 60))
    def test_monotone(self, p1, p2, n1, n2):
        (pa, pb), (na, nb) = sorted((p1, p2)), sorted((n1, n2))
        assert p_cl_given_neighbors(pa, na) <= p_cl_given_neighbors(pb, nb) + 1e-15


class TestNeighborPmf:
    def test_lambda_one_n_zero(self):
        assert neighbor_pmf(1.0, 0) == pytest.approx(math.exp(-1) / (1 - math.exp(-1)), rel=1e-14)

    def test_against_conditioned_poisson(self):
        lam = 0.35 * math.pi * 16
        ref = stats.poisson.pmf(17, lam) / stats.poisson.sf(0, lam)
        assert neighbor_pmf(lam, 16) == pytest.approx(ref, rel=1e-12)

    @pytest.mark.parametrize("lam", [1e-3, 0.5, 1.0, 5.0, 17.6, 100.0, 800.0])
    def test_normalised(self, lam):
        n_max = int(lam + 20 * math.sqrt(lam) + 50)
        assert np.sum(neighbor_pmf(lam, np.arange(n_max + 1))) == pytest.approx(1.0, abs=1e-9)

    def test_large_n_no_overflow(self):
        v = neighbor_pmf(800.0, np.array([0, 400, 800, 5000]))
        assert np.all(np.isfinite(v)) and v[-1] == 0.0


class TestAverageCollision:
    @pytest.mark.parametrize("p", [0.05, 0.1, 0.2])
    @pytest.mark.parametrize("lam", [1.0, 5.0, 17.0])
    def test_closed_form_equals_series(self, p, lam):
        assert abs(avg_collision_prob(p, lam) - avg_collision_series(p, lam, 200)) < 1e-10

    @pytest.mark.parametrize("p", [0.01, 0.3, 0.9])
    @pytest.mark.parametrize("lam", [0.01, 3.0, 40.0])
    def test_internal_series_agrees(self, p, lam):
        assert avg_collision_prob_series(p, lam) == pytest.approx(avg_collision_series(p, lam, 400), abs=1e-12)

    def test_isolated_limit(self):
        assert avg_collision_prob(0.1, 1e-9) < 1e-9
        assert avg_collision_prob(0.1, 1e-12) >= 0.0

    def test_no_transmission_limit(self):
        assert avg_collision_prob(1e-12, 17.0) < 1e-10
        assert avg_collision_prob(0.0, 17.0) == pytest.approx(0.0, abs=1e-15)

    @settings(max_examples=200)
    @given(st.floats(1e-3, 0.99), st.floats(1e-3, 0.99), st.floats(0.1, 50.0))
    def test_increasing_in_p_tx(self, a, b, lam):
        if abs(a - b) < 1e-6:
            return
        lo, hi = sorted((a, b))
        c_lo, c_hi = avg_collision_prob(lo, lam), avg_collision_prob(hi, lam)
        assert c_lo <= c_hi
        if c_hi < 1 - 1e-9:
            assert c_lo < c_hi


def _composed_oracle(p, params):
    """p -> series collision -> renewal attempt rate (no library closed forms)."""
    pcl = avg_collision_series(p, params.lambda_nb, 400)
    return bianchi_tx(pcl, params.w_min)


class TestFixedPoint:
    def test_isolated_limit(self):
        m = solve_fixed_point(NetworkParams(1e-9))
        assert m.p_tx == pytest.approx(2 / 17, abs=1e-8)
        assert m.p_cl_avg < 1e-8
        assert m.mu == pytest.approx(2 / 17, abs=1e-8)

    def test_trends_over_density(self):
        rhos = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30]
        models = [solve_fixed_point(NetworkParams(r)) for r in rhos]
        ptx = [m.p_tx for m in models]
        pcl = [m.p_cl_avg for m in models]
        assert all(a > b for a, b in zip(ptx, ptx[1:]))
        assert all(a < b for a, b in zip(pcl, pcl[1:]))
        assert all(0 <= c < 0.5 for c in pcl)

    def test_self_consistent_under_one_more_damped_step(self):
        params = NetworkParams(0.1)
        m = solve_fixed_point(params)
        step = 0.5 * m.p_tx + 0.5 * p_tx_of_collision(avg_collision_prob(m.p_tx, m.lambda_nb), params.w_min)
        assert abs(step - m.p_tx) < 1e-10

    @pytest.mark.parametrize("rho", [0.01, 0.1, 0.2, 0.35, 0.6, 2.0])
    def test_matches_brentq_on_oracle_map(self, rho):
        params = NetworkParams(rho)
        m = solve_fixed_point(params)
        ref = optimize.brentq(lambda p: p - _composed_oracle(p, params), 1e-9, 2 / 17, xtol=1e-14)
        assert m.p_tx == pytest.approx(ref, abs=1e-9)
        assert m.mu == pytest.approx((1 - m.p_cl_avg) * m.p_tx, rel=1e-15)

    @given(st.floats(1e-4, 3.0), st.sampled_from([2, 8, 16, 64]), st.floats(1.0, 8.0))
    @settings(max_examples=60, deadline=None)
    def test_residuals(self, rho, w, r):
        params = NetworkParams(rho, r, w)
        m = solve_fixed_point(params)
        assert abs(m.p_tx - p_tx_of_collision(m.p_cl_avg, w)) < 1e-10
        assert abs(m.p_cl_avg - avg_collision_prob(m.p_tx, params.lambda_nb)) < 1e-10
        assert 0 < m.p_tx <= 2 / (w + 1) and 0 <= m.p_cl_avg < 0.5

    def test_tolerance_validated(self):
        with pytest.raises(ValueError):
            solve_fixed_point(NetworkParams(0.1), tol=0.0)


class TestServicePmf:
    def test_deterministic(self):
        assert service_pmf(1.0, 1) == 1.0
        assert service_pmf(1.0, 2) == 0.0 and service_pmf(1.0, 7) == 0.0

    def test_value(self):
        assert service_pmf(0.5, 3) == pytest.approx(0.125, abs=1e-15)

    @pytest.mark.parametrize("mu", [0.1, 0.5, 0.9])
    def test_normalised_with_mean(self, mu):
        j = np.arange(1, 2000)
        pmf = service_pmf(mu, j)
        assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
        assert (j * pmf).sum() == pytest.approx(1 / mu, rel=1e-10)

    def test_domain(self):
        with pytest.raises(ValueError):
            service_pmf(0.0, 1)
        with pytest.raises(ValueError):
            service_pmf(0.5, 0)
