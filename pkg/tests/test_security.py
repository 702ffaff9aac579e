"""Unit tests for the network security engine."""
import math

import numpy as np
import pytest

from ponqkd.gaussian import CovarianceMatrix, symplectic_eigenvalues
from ponqkd.security import (
    NetworkTopology,
    ProtocolParams,
    UserChannelParams,
    build_ptmp_covariance,
    channel_transmittance,
    evaluate_network,
    holevo_bound,
    inter_user_mutual_info,
    mutual_info_alice_bob,
    plob_bound,
    secret_key_rate,
)

P43 = ProtocolParams(v_mod=4.3, beta=0.92, symbol_rate_hz=1e9, pilot_ratio=0.2)

#: the four characterized receivers of the 16-node campaign
LOSSES = (15.15, 14.95, 14.62, 15.77)
ETAS = (0.71, 0.63, 0.63, 0.75)
XIS = (0.0295, 0.023, 0.0305, 0.0275)


def sixteen_user_network():
    users = [
        UserChannelParams(10 ** (-LOSSES[i % 4] / 10), XIS[i % 4], ETAS[i % 4])
        for i in range(16)
    ]
    return build_ptmp_covariance(P43, users), users


class TestChannelTransmittance:
    def test_lossless(self):
        topo = NetworkTopology(splitter_fanout=1, attenuation_db_per_km=0.2)
        assert channel_transmittance(topo, 0) == pytest.approx(1.0)

    def test_sixteen_way_six_km(self):
        topo = NetworkTopology(
            splitter_fanout=16, feeder_length_km=6.0, splitter_excess_loss_db=1.86
        )
        assert channel_transmittance(topo, 0) == pytest.approx(10 ** (-15.1012 / 10), rel=1e-6)
        assert channel_transmittance(topo, 0) == pytest.approx(0.0309, abs=2e-5)

    def test_four_way_fifteen_km(self):
        topo = NetworkTopology(
            splitter_fanout=4, feeder_length_km=15.0, splitter_excess_loss_db=1.88
        )
        assert channel_transmittance(topo, 0) == pytest.approx(0.0813, abs=1e-4)

    def test_bad_user(self):
        topo = NetworkTopology(splitter_fanout=2)
        with pytest.raises(IndexError):
            channel_transmittance(topo, 2)


class TestBuildCovariance:
    def test_single_lossless_user_is_tmsv(self):
        gamma = build_ptmp_covariance(P43, [UserChannelParams(1.0)])
        v = 5.3
        c = math.sqrt(v * v - 1)
        expected = np.array(
            [[v, 0, c, 0], [0, v, 0, -c], [c, 0, v, 0], [0, -c, 0, v]]
        )
        np.testing.assert_allclose(gamma.data, expected, atol=1e-12)

    def test_balanced_two_user_cross_block(self):
        users = [UserChannelParams(0.5), UserChannelParams(0.5)]
        gamma = build_ptmp_covariance(P43, users)
        np.testing.assert_allclose(gamma.block(1, 2), 0.5 * 4.3 * np.eye(2), atol=1e-12)

    def test_paper_structure(self):
        gamma, users = sixteen_user_network()
        assert gamma.modes == 17
        # strong source diagonal, weak source-receiver coupling, weaker cross terms
        a_diag = gamma.block(0, 0)[0, 0]
        ab = abs(gamma.block(0, 1)[0, 0])
        bb = abs(gamma.block(1, 2)[0, 0])
        assert a_diag == pytest.approx(5.3)
        assert a_diag > ab > bb > 0
        # closed-form entries
        tau = users[0].tau
        assert gamma.block(1, 1)[0, 0] == pytest.approx(tau * 4.3 + 1 + tau * 0.0295)
        assert ab == pytest.approx(math.sqrt(tau * (5.3**2 - 1)))
        assert symplectic_eigenvalues(gamma).min() >= 1 - 1e-9


class TestMutualInfoAliceBob:
    def test_no_modulation(self):
        gamma = build_ptmp_covariance(ProtocolParams(v_mod=0.0), [UserChannelParams(0.5)])
        assert mutual_info_alice_bob(gamma, 0) == pytest.approx(0.0, abs=1e-12)

    def test_unit_snr(self):
        # tau v/2 = 1 with no excess noise gives log2(2) = 1 bit
        tau = 2.0 / 4.3
        gamma = build_ptmp_covariance(P43, [UserChannelParams(tau)])
        assert mutual_info_alice_bob(gamma, 0) == pytest.approx(1.0, abs=1e-12)

    def test_sixteen_user_band(self):
        gamma, users = sixteen_user_network()
        i_ab = mutual_info_alice_bob(gamma, 0)
        snr = users[0].tau * 4.3 / 2 / (1 + users[0].tau * 0.0295 / 2)
        assert i_ab == pytest.approx(math.log2(1 + snr), rel=1e-9)
        assert 0.041 <= snr <= 0.048
        assert i_ab == pytest.approx(0.0656, abs=3e-4)


class TestHolevoBound:
    def test_lossless_noiseless_zero(self):
        gamma = build_ptmp_covariance(P43, [UserChannelParams(1.0)])
        assert holevo_bound(gamma, 0) == pytest.approx(0.0, abs=1e-7)

    def test_no_modulation_zero(self):
        gamma = build_ptmp_covariance(ProtocolParams(v_mod=0.0), [UserChannelParams(0.3)])
        assert holevo_bound(gamma, 0) == pytest.approx(0.0, abs=1e-9)

    def test_sixteen_user_value(self):
        """Reduced-state Holevo bound sits in the range the campaign data implies."""
        gamma, _ = sixteen_user_network()
        chi = holevo_bound(gamma.reduce([0, 1]), 0)
        assert 0.056 <= chi <= 0.058


class TestInterUserMutualInfo:
    def test_uncoupled_users_zero(self):
        data = np.eye(6)
        data[0, 0] = data[1, 1] = 5.3
        assert inter_user_mutual_info(CovarianceMatrix(data), 0, 1) == pytest.approx(0.0)

    def test_symmetric_two_user_closed_form(self):
        users = [UserChannelParams(0.5), UserChannelParams(0.5)]
        gamma = build_ptmp_covariance(P43, users)
        tv = 0.5 * 4.3
        rho2 = (tv / (tv + 2.0)) ** 2
        assert inter_user_mutual_info(gamma, 0, 1) == pytest.approx(-math.log2(1 - rho2), rel=1e-12)

    def test_same_user_rejected(self):
        gamma, _ = sixteen_user_network()
        with pytest.raises(ValueError):
            inter_user_mutual_info(gamma, 3, 3)

    def test_sixteen_user_below_holevo(self):
        gamma, _ = sixteen_user_network()
        chis = [holevo_bound(gamma.reduce([0, u + 1]), 0) for u in range(16)]
        pairwise = [
            inter_user_mutual_info(gamma, i, j)
            for i in range(16)
            for j in range(16)
            if i != j
        ]
        assert max(pairwise) < min(chis)


class TestSecretKeyRate:
    def test_ideal_single_user(self):
        p = ProtocolParams(v_mod=4.3, beta=1.0, symbol_rate_hz=1e9, pilot_ratio=0.0)
        gamma = build_ptmp_covariance(p, [UserChannelParams(1.0)])
        rate = secret_key_rate(gamma, 0, p)
        assert rate.k_bits_per_symbol == pytest.approx(rate.i_ab, abs=1e-7)
        assert rate.skr_bps == pytest.approx(rate.i_ab * 1e9, rel=1e-6)

    def test_insecure_regime_clamped(self):
        # heavy excess noise: chi exceeds beta I and bps clamps at zero
        users = [UserChannelParams(0.02, excess_noise_xi=0.5)]
        gamma = build_ptmp_covariance(P43, users)
        rate = secret_key_rate(gamma, 0, P43)
        assert rate.k_bits_per_symbol < 0
        assert rate.skr_bps == 0.0

    def test_sixteen_user_rates_match_campaign(self):
        gamma, _ = sixteen_user_network()
        paper_mbps = (2.141, 2.147, 2.153, 1.905)
        for u in range(4):
            rate = secret_key_rate(gamma, u, P43)
            assert rate.limited_by == "holevo"
            ratio = rate.skr_bps / 1e6 / paper_mbps[u]
            assert 1 / 1.5 <= ratio <= 1.5
        mean = np.mean([secret_key_rate(gamma, u, P43).skr_bps for u in range(4)]) / 1e6
        assert 1 / 1.5 <= mean / 2.086 <= 1.5

    def test_monotonicity_grid(self):
        base = dict(transmittance_t=0.03, excess_noise_xi=0.03, eta_trusted=0.7)
        k_of = lambda **kw: secret_key_rate(
            build_ptmp_covariance(P43, [UserChannelParams(**{**base, **kw})]), 0, P43
        ).k_bits_per_symbol
        # non-increasing in excess noise
        ks = [k_of(excess_noise_xi=x) for x in np.linspace(0.0, 0.1, 8)]
        assert all(a >= b - 1e-12 for a, b in zip(ks, ks[1:]))
        # non-decreasing in detector efficiency
        ks = [k_of(eta_trusted=e) for e in np.linspace(0.4, 1.0, 8)]
        assert all(a <= b + 1e-12 for a, b in zip(ks, ks[1:]))
        # non-decreasing in beta
        gammas = build_ptmp_covariance(P43, [UserChannelParams(**base)])
        ks = [
            secret_key_rate(
                gammas, 0, ProtocolParams(v_mod=4.3, beta=b, symbol_rate_hz=1e9, pilot_ratio=0.2)
            ).k_bits_per_symbol
            for b in np.linspace(0.7, 1.0, 7)
        ]
        assert all(a <= b + 1e-12 for a, b in zip(ks, ks[1:]))

    def test_trusted_loss_split_at_fixed_tau(self):
        """At fixed channel-output statistics (fixed tau), moving loss between
        the channel and the trusted detector never decreases the rate."""
        tau = 0.0216
        k_ref = None
        for eta in (0.6, 0.75, 0.9, 1.0):
            users = [UserChannelParams(tau / eta, 0.03, eta)]
            gamma = build_ptmp_covariance(P43, users)
            k = secret_key_rate(gamma, 0, P43).k_bits_per_symbol
            if k_ref is not None:
                assert k == pytest.approx(k_ref, abs=1e-12)
            k_ref = k

    def test_permutation_symmetry(self):
        users = [
            UserChannelParams(0.03, 0.02, 0.7),
            UserChannelParams(0.05, 0.03, 0.6),
            UserChannelParams(0.02, 0.01, 0.8),
        ]
        gamma = build_ptmp_covariance(P43, users)
        res = evaluate_network(gamma, P43)
        perm = [2, 0, 1]
        gamma_p = build_ptmp_covariance(P43, [users[i] for i in perm])
        res_p = evaluate_network(gamma_p, P43)
        for new_idx, old_idx in enumerate(perm):
            assert res_p.rate(new_idx).k_bits_per_symbol == pytest.approx(
                res.rate(old_idx).k_bits_per_symbol, rel=1e-10
            )

    def test_nonnegative_terms(self):
        gamma, _ = sixteen_user_network()
        res = evaluate_network(gamma, P43)
        for rate in res.users:
            assert rate.chi_be >= 0
            assert rate.i_ab >= 0
            assert rate.max_inter_bob >= 0


class TestPlobBound:
    def test_half(self):
        assert plob_bound(0.5) == pytest.approx(1.0)

    def test_fifteen_db(self):
        assert plob_bound(0.0309) == pytest.approx(0.04528, abs=5e-6)

    def test_domain(self):
        with pytest.raises(ValueError):
            plob_bound(0.0)
        with pytest.raises(ValueError):
            plob_bound(1.0)

    def test_rates_below_bound(self):
        gamma, users = sixteen_user_network()
        res = evaluate_network(gamma, P43)
        for user, rate in zip(users, res.users):
            assert max(rate.k_bits_per_symbol, 0.0) < plob_bound(user.transmittance_t)
