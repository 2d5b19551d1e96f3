"""Prototype filter and synthesis/analysis filter bank tests."""
import numpy as np
import pytest

from fbmc_cellfree.filterbank import (analyze, analyze_complex, oqam_demap,
                                      oqam_map, oqam_phase, phydyas_prototype,
                                      subcarrier_filter, synthesize)


def test_prototype_unit_energy():
    for M in (16, 64, 256):
        proto = phydyas_prototype(M, 4)
        assert abs(np.sum(proto.taps ** 2) - 1.0) < 1e-12


def test_prototype_symmetry_about_integer_midpoint():
    # f[l] == f[kappa*M - l]: even symmetry about sample kappa*M/2
    proto = phydyas_prototype(64, 4)
    tail = proto.taps[1:]
    assert np.max(np.abs(tail - tail[::-1])) < 1e-12
    # the edge sample nearly vanishes for kappa = 4 (coefficients are
    # tabulated to six decimals, so it is small rather than exactly zero)
    assert abs(proto.taps[0]) < 1e-6


def test_prototype_peak_at_midpoint():
    proto = phydyas_prototype(64, 4)
    assert np.argmax(proto.taps) == proto.length // 2


def test_prototype_rejects_bad_args():
    with pytest.raises(ValueError):
        phydyas_prototype(64, 7)
    with pytest.raises(ValueError):
        phydyas_prototype(48, 4)


def test_subcarrier_filter_modulation():
    proto = phydyas_prototype(32, 4)
    m = 5
    fm = subcarrier_filter(proto, m)
    ell = np.arange(proto.length)
    ref = proto.taps * np.exp(2j * np.pi * m * ell / 32)
    assert np.max(np.abs(fm - ref)) == 0.0


def test_oqam_phase_quarter_turns():
    assert oqam_phase(0, 0) == 1
    assert oqam_phase(1, 0) == 1j
    assert oqam_phase(1, 1) == -1
    assert oqam_phase(2, 3) == 1j
    assert oqam_phase(3, 2) == 1j


def test_oqam_map_roundtrip_and_power():
    rng = np.random.default_rng(7)
    qam = (rng.standard_normal((8, 10, 3)) +
           1j * rng.standard_normal((8, 10, 3))) / np.sqrt(2.0)
    oq = oqam_map(qam)
    assert oq.shape == (8, 20, 3)
    back = oqam_demap(oq)
    assert np.max(np.abs(back - qam)) < 1e-14
    # unit-power complex symbols map to (on average) unit-power real streams
    assert abs(np.mean(oq ** 2) - np.mean(np.abs(qam) ** 2)) < 0.05


def test_synthesize_matches_direct_sum():
    """Fast IFFT path against the defining double sum over (m, slot)."""
    M, kappa, n_slots = 16, 4, 6
    proto = phydyas_prototype(M, kappa)
    rng = np.random.default_rng(3)
    s = rng.standard_normal((M, n_slots)) + 1j * rng.standard_normal((M, n_slots))
    x = synthesize(s, proto)
    half = M // 2
    ref = np.zeros((n_slots - 1) * half + proto.length, dtype=complex)
    for m in range(M):
        fm = subcarrier_filter(proto, m)
        for i in range(n_slots):
            ref[i * half:i * half + proto.length] += fm * s[m, i]
    assert np.max(np.abs(x - ref)) < 1e-12


def test_synthesize_multiantenna_axis():
    M = 16
    proto = phydyas_prototype(M, 4)
    rng = np.random.default_rng(11)
    s = rng.standard_normal((M, 4, 2)) + 1j * rng.standard_normal((M, 4, 2))
    x = synthesize(s, proto)
    for a in range(2):
        assert np.max(np.abs(x[:, a] - synthesize(s[:, :, a], proto))) == 0.0


def test_back_to_back_symbol_recovery():
    """Transmultiplexer residual interference stays below -50 dB."""
    M, kappa, n_slots = 64, 4, 36
    proto = phydyas_prototype(M, kappa)
    rng = np.random.default_rng(5)
    a = rng.choice([-1.0, 1.0], size=(M, n_slots))
    s = a * oqam_phase(np.arange(M)[:, None], np.arange(n_slots)[None, :])
    x = synthesize(s, proto)
    guard = 2 * kappa
    errs = []
    for m_bar in range(0, M, 7):
        est = analyze(x, m_bar, proto, n_slots)
        errs.append(est[guard:-guard] - a[m_bar, guard:-guard])
    sir_db = -10.0 * np.log10(np.mean(np.concatenate(errs) ** 2))
    assert sir_db >= 50.0


def test_analyze_offset_shifts_window():
    M = 32
    proto = phydyas_prototype(M, 4)
    rng = np.random.default_rng(13)
    y = rng.standard_normal(400) + 1j * rng.standard_normal(400)
    base = analyze_complex(y, 3, proto, 4, offset=0)
    shifted = analyze_complex(np.concatenate([np.zeros(10), y]), 3, proto, 4,
                              offset=10)
    assert np.max(np.abs(base - shifted)) < 1e-12
