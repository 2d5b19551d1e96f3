"""Power delay profiles, channel draws and the PDP coefficient tables."""
import numpy as np
import pytest

from fbmc_cellfree.channel import (channel_matrix, draw_channel,
                                   freq_response, load_pdp, mu_coeff,
                                   pdp_statistics, shifted_pdp, xi_coeff,
                                   zeta_phase, zeta_table)
from conftest import T_S_SMALL, synthetic_layout


def test_eva_tap_indices_at_7p68_msps():
    """EVA delays rounded onto the 130.2 ns grid land on known indices."""
    pdp = load_pdp("eva", T_S_SMALL)
    expect = {0, 1, 2, 3, 5, 8, 13, 19}
    assert set(np.nonzero(pdp.taps)[0]) == expect
    assert pdp.num_taps == 20
    assert pdp.taps.sum() == pytest.approx(1.0, abs=1e-12)
    # the first grid tap absorbs both the 0 ns and the 30 ns path
    p0 = 1.0 + 10.0 ** (-0.15)
    p1 = 10.0 ** (-0.14)
    assert pdp.taps[0] / pdp.taps[1] == pytest.approx(p0 / p1, rel=1e-9)


def test_flat_profile_and_errors():
    assert load_pdp("flat", 1e-7).taps.tolist() == [1.0]
    with pytest.raises(ValueError):
        load_pdp("tdl-x", 1e-7)
    with pytest.raises(ValueError):
        load_pdp([], 1e-7)
    with pytest.raises(ValueError):
        load_pdp([(-5.0, 0.0)], 1e-7)


def test_custom_profile_merging():
    pdp = load_pdp([(0.0, 0.0), (1.0, 0.0), (200.0, -3.0)], 1e-7)
    # 0 ns and 1 ns merge into tap 0; 200 ns rounds to tap 2
    assert pdp.num_taps == 3
    assert pdp.taps[1] == 0.0
    assert pdp.taps[0] / pdp.taps[2] == pytest.approx(2.0 / 10 ** -0.3,
                                                      rel=1e-12)


def test_draw_channel_statistics():
    rng = np.random.default_rng(21)
    layout = synthetic_layout(2, 2, rng, unit_beta=False)
    pdp = load_pdp("eva", T_S_SMALL)
    acc = np.zeros(pdp.num_taps)
    trials = 400
    for t in range(trials):
        real = draw_channel(pdp, layout, 8, np.random.default_rng(1000 + t))
        acc += np.mean(np.abs(real.taps[0, 1]) ** 2, axis=1)
    acc /= trials
    ref = layout.beta[0, 1] * pdp.taps
    mask = pdp.taps > 0
    assert np.max(np.abs(acc[mask] - ref[mask]) / ref[mask]) < 0.15
    assert np.all(acc[~mask] == 0.0)


def test_freq_response_matches_direct_sum():
    rng = np.random.default_rng(3)
    taps = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
    w = 0.817
    ref = sum(taps[l] * np.exp(-1j * w * l) for l in range(6))
    assert np.max(np.abs(freq_response(taps, w) - ref)) < 1e-12
    many = freq_response(taps, np.array([0.0, w]))
    assert many.shape == (2, 4)
    assert np.max(np.abs(many[1] - ref)) < 1e-12


def test_channel_matrix_rows_are_users():
    rng = np.random.default_rng(5)
    layout = synthetic_layout(2, 3, rng)
    pdp = load_pdp("eva", T_S_SMALL)
    real = draw_channel(pdp, layout, 4, rng)
    H = channel_matrix(real, 1, 0.3)
    assert H.shape == (3, 4)
    assert np.max(np.abs(H[2] - freq_response(real.taps[1, 2], 0.3))) < 1e-12


def test_mu_xi_zeta_direct_sums():
    pdp = load_pdp("eva", T_S_SMALL)
    M, l_pbar = 64, 1
    ell = np.arange(pdp.num_taps)

    w = 2.0 * np.pi * 1 / M + 2.0 * np.pi * (-1) / ((l_pbar + 1) * M)
    ref = np.sum(pdp.taps * np.exp(1j * w * ell))
    assert mu_coeff(pdp, M, l_pbar, 1, -1) == pytest.approx(ref, abs=1e-14)

    ref = np.sum(pdp.taps * np.exp(2j * np.pi * 2 * ell / M))
    assert xi_coeff(pdp, M, 2) == pytest.approx(ref, abs=1e-14)

    zt = zeta_table(pdp, M, l_pbar)
    assert zt.shape == (3, 3)
    assert np.allclose(np.diag(zt), 1.0)
    # zeta_{pq} only depends on p - q and conjugates under swap
    assert zt[2, 1] == pytest.approx(zt[1, 0], abs=1e-14)
    assert zt[0, 1] == pytest.approx(np.conj(zt[1, 0]), abs=1e-14)
    # consistency with mu at zero subcarrier separation
    assert zt[2, 1] == pytest.approx(mu_coeff(pdp, M, l_pbar, 0, 1), abs=1e-14)


def test_zeta_phase_form():
    ph = zeta_phase(7, 64, 1)
    w1 = 2.0 * np.pi / (2 * 64)
    assert ph[2, 0] == pytest.approx(np.exp(1j * w1 * 7 * 2), abs=1e-14)
    assert np.allclose(np.abs(ph), 1.0)


def test_shifted_pdp_padding_and_truncation():
    pdp = load_pdp("eva", T_S_SMALL)
    lam = shifted_pdp(pdp, 4, 30)
    assert np.all(lam[:4] == 0.0)
    assert np.max(np.abs(lam[4:24] - pdp.taps)) == 0.0
    short = shifted_pdp(pdp, 25, 30)
    assert np.max(np.abs(short[25:] - pdp.taps[:5])) == 0.0
    with pytest.raises(ValueError):
        shifted_pdp(pdp, -1, 30)


def test_pdp_statistics_bundle():
    pdp = load_pdp("eva", T_S_SMALL)
    st = pdp_statistics(pdp, 64, 1, tau=3, m=32, length=25)
    assert st.lambda_mod.shape == (3, 25)
    # modulation preserves magnitude of the shifted profile
    assert np.max(np.abs(np.abs(st.lambda_mod[0]) - st.lambda_shifted)) < 1e-14
    assert np.max(np.abs(st.zeta_k - st.zeta * zeta_phase(3, 64, 1))) == 0.0
