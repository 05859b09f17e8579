import numpy as np
import pytest

from paprlab.config import derive_layout, make_spec
from paprlab.papr import measure_papr
from paprlab.waveform import (
    FilterSpec,
    SampledSignal,
    WaveformOptions,
    apply_edge_window,
    apply_subband_filter,
    constellation,
    design_subband_filter,
    draw_info_symbols,
    read_frame_dump,
    synthesize_frames,
    synthesize_lcm_frame,
    synthesize_subband_frames,
    synthesize_subband_symbol,
    trial_stream,
    write_frame_dump,
)


# -- information symbols -------------------------------------------------

def test_qpsk_points():
    pts = constellation(4)
    expected = {complex(a, b) / np.sqrt(2) for a in (-1, 1) for b in (-1, 1)}
    assert len(pts) == 4
    for p in pts:
        assert min(abs(p - e) for e in expected) < 1e-15
    np.testing.assert_allclose(np.abs(pts), 1.0)


@pytest.mark.parametrize("order", [4, 16, 64])
def test_constellation_unit_power(order):
    assert np.mean(np.abs(constellation(order)) ** 2) == pytest.approx(1.0, abs=1e-14)


def test_16qam_scaling_and_sample_power():
    pts = constellation(16)
    assert np.max(pts.real) == pytest.approx(3 / np.sqrt(10))
    block = draw_info_symbols(16, 10**6, np.random.default_rng(3))
    assert np.mean(np.abs(block.symbols) ** 2) == pytest.approx(1.0, rel=5e-3)
    assert abs(np.mean(block.symbols.real * block.symbols.imag)) < 5e-3
    assert set(np.round(block.symbols * np.sqrt(10)).tolist()) <= set(np.round(pts * np.sqrt(10)).tolist())


def test_draws_are_reproducible():
    a = draw_info_symbols(16, 100, trial_stream(11, 3))
    b = draw_info_symbols(16, 100, trial_stream(11, 3))
    c = draw_info_symbols(16, 100, trial_stream(11, 4))
    np.testing.assert_array_equal(a.symbols, b.symbols)
    assert not np.array_equal(a.symbols, c.symbols)


def test_unsupported_order():
    with pytest.raises(ValueError):
        draw_info_symbols(8, 10, np.random.default_rng(0))
    with pytest.raises(ValueError):
        draw_info_symbols(16, 0, np.random.default_rng(0))


# -- single symbols ----------------------------------------------------------

def _direct_symbol(layout, i, symbols, oversample, cp):
    """Brute-force sum of tones on the symbol's own time grid."""
    fs = layout.sample_rate_hz(oversample)
    f = layout.spacing_hz[i]
    delta = layout.offset_hz[i]
    n = layout.counts[i]
    length = layout.useful_samples(i, oversample) + oversample * cp
    t = (np.arange(length) - oversample * cp) / fs
    out = np.zeros(length, dtype=complex)
    for k in range(n):
        out += symbols[k] * np.exp(2j * np.pi * (k * f + delta) * t)
    return np.sqrt(layout.powers[i] / n) * out


@pytest.mark.parametrize("guard", [20, 21.5])
def test_symbol_matches_direct_tone_sum(guard):
    lay = derive_layout(make_spec([24, 12], [1, 2], [0.3, 0.7], guards=guard))
    rng = np.random.default_rng(5)
    for i in range(2):
        block = draw_info_symbols(16, lay.counts[i], rng)
        sig = synthesize_subband_symbol(i, lay, block, oversample=4, cp_samples=3)
        ref = _direct_symbol(lay, i, block.symbols, 4, 3)
        np.testing.assert_allclose(sig.samples, ref, atol=1e-10)


def test_single_tone_constant_modulus():
    lay = derive_layout(make_spec([1], powers=[1.0]))
    sig = synthesize_subband_symbol(0, lay, np.array([1.0 + 0j]))
    np.testing.assert_allclose(np.abs(sig.samples), 1.0, atol=1e-12)


def test_coherent_peak_at_cp_offset():
    lay = derive_layout(make_spec([4], powers=[1.0], cp_fraction=0.25))
    sig = synthesize_subband_symbol(0, lay, np.ones(4, dtype=complex))
    j = lay.oversample
    assert np.argmax(np.abs(sig.samples)) == j * 1
    assert np.max(np.abs(sig.samples)) == pytest.approx(2.0)


def test_cyclic_prefix_copies_tail(two_band_layout):
    lay = two_band_layout
    block = draw_info_symbols(16, 300, np.random.default_rng(1))
    base_useful = lay.useful_samples(1, 1)
    cp = round(lay.cp_fraction * base_useful)
    x = synthesize_subband_symbol(1, lay, block).samples
    ncp = lay.oversample * cp
    np.testing.assert_allclose(x[:ncp], x[-ncp:], atol=1e-12)


def test_symbol_errors(small_layout):
    with pytest.raises(ValueError):
        synthesize_subband_symbol(0, small_layout, np.ones(5))
    with pytest.raises(ValueError):
        synthesize_subband_symbol(0, small_layout, np.ones(200), oversample=0)


# -- frames -----------------------------------------------------------------

def test_single_subband_frame_is_one_symbol():
    lay = derive_layout(make_spec([64], powers=[1.0]))
    frame = synthesize_lcm_frame(lay, trial_stream(1, 0))
    block = draw_info_symbols(16, 64, trial_stream(1, 0))
    sym = synthesize_subband_symbol(0, lay, block)
    np.testing.assert_allclose(frame.samples, sym.samples, atol=1e-13)
    assert len(frame) == lay.frame_samples()


def test_second_subband_carries_two_symbols(small_layout):
    lay = small_layout
    parts = synthesize_subband_frames(lay, 9, [0])
    stream = trial_stream(9, 0)
    draw_info_symbols(16, 200, stream)  # subband 1's single symbol
    second = draw_info_symbols(16, 2 * 100, stream).symbols.reshape(2, 100)
    # base CP budget split over the two symbols, remainder first
    c = lay.cp_samples
    cps = [c - c // 2, c // 2]
    pieces = [synthesize_subband_symbol(1, lay, second[u], cp_samples=cps[u]).samples for u in range(2)]
    np.testing.assert_allclose(parts[1][0], np.concatenate(pieces), atol=1e-12)
    assert len(parts[1][0]) == lay.frame_samples()


def test_frame_determinism(small_layout):
    a = synthesize_frames(small_layout, 42, range(8))
    b = synthesize_frames(small_layout, 42, [5])
    np.testing.assert_array_equal(a[5], b[0])
    c = synthesize_lcm_frame(small_layout, trial_stream(42, 5))
    np.testing.assert_array_equal(a[5], c.samples)


def test_ensemble_mean_power(small_layout):
    z = synthesize_frames(small_layout, 1, range(10_000))
    assert np.mean(np.abs(z) ** 2) == pytest.approx(1.0, rel=0.01)


def test_asynchronous_frames_have_random_starts():
    lay = derive_layout(make_spec([40, 30, 24], [1, "5/4", "5/3"], mode="asynchronous"))
    z = synthesize_frames(lay, 3, range(2000))
    assert z.shape == (2000, lay.frame_samples())
    assert np.mean(np.abs(z) ** 2) == pytest.approx(1.0, rel=0.02)


def test_gaussian_marginals():
    # N_i >= 300 each; J = 1 is enough for per-sample marginals
    lay = derive_layout(make_spec([300, 300], [1, 2], oversample=1))
    width = lay.frame_samples(1)
    cols = [0, width // 3, width - 1]
    z = np.concatenate(
        [synthesize_frames(lay, 17, range(s, s + 5000))[:, cols] for s in range(0, 100_000, 5000)]
    )
    for k in range(len(cols)):
        x = z[:, k].real
        assert abs(x.mean()) < 0.01
        assert x.var() == pytest.approx(0.5, rel=0.02)


def test_subbands_uncorrelated(small_layout):
    p1, p2 = synthesize_subband_frames(small_layout, 23, range(10_000))
    rho = abs(np.vdot(p2, p1)) / np.sqrt(np.vdot(p1, p1).real * np.vdot(p2, p2).real)
    assert rho < 0.02


def test_oversampling_only_adds_samples(small_layout):
    hi = synthesize_frames(small_layout, 4, range(50), oversample=8)
    lo = synthesize_frames(small_layout, 4, range(50), oversample=1)
    np.testing.assert_allclose(hi[:, ::8], lo, atol=1e-12)
    for a, b in zip(hi, lo):
        assert measure_papr(a).gamma >= measure_papr(b).gamma * (1 - 1e-12)


# -- filtering and windowing --------------------------------------------------

def test_filter_zero_in_zero_out(two_band_layout):
    taps = design_subband_filter(two_band_layout, 0, FilterSpec())
    out = apply_subband_filter(np.zeros(4000, dtype=complex), taps)
    assert not np.any(out)


def test_filter_impulse_response(two_band_layout):
    spec = FilterSpec()
    for i in range(2):
        taps = design_subband_filter(two_band_layout, i, spec)
        x = np.zeros(5000, dtype=complex)
        x[2000] = 1.0
        y = apply_subband_filter(x, taps)
        np.testing.assert_allclose(y[2000 - spec.order // 2: 2000 + spec.order // 2 + 1], taps, atol=1e-12)


def test_filter_energy_matches_passband_width():
    # sum |h|^2 * Fs / W with W the cutoff-to-cutoff width; the Hann
    # transition costs about 1.3% when the subband spans the whole grid
    lay = derive_layout(make_spec([600], [1]))
    taps = design_subband_filter(lay, 0, FilterSpec())
    width = (float(lay.bandwidth_units[0]) + 2 * float(lay.spacing_ratio[0])) * lay.base_spacing_hz
    energy = np.sum(np.abs(taps) ** 2) * lay.sample_rate_hz() / width
    assert energy == pytest.approx(1.0, rel=0.02)


def test_filter_passes_centre_tone(two_band_layout):
    lay = two_band_layout
    for i in range(2):
        taps = design_subband_filter(lay, i, FilterSpec())
        centre = (float(lay.offset_units[i]) + float(lay.bandwidth_units[i]) / 2) * lay.base_spacing_hz
        m = np.arange(lay.frame_samples())
        tone = np.exp(2j * np.pi * centre * m / lay.sample_rate_hz())
        y = apply_subband_filter(tone, taps)
        inner = slice(600, -600)
        np.testing.assert_allclose(np.abs(y[inner]), 1.0, rtol=0.01)


def test_filter_longer_than_frame(two_band_layout):
    taps = design_subband_filter(two_band_layout, 0, FilterSpec())
    with pytest.raises(ValueError):
        apply_subband_filter(np.zeros(100, dtype=complex), taps)


def test_filtered_frames_keep_length_and_power(two_band_layout):
    opts = WaveformOptions(filter=FilterSpec())
    z = synthesize_frames(two_band_layout, 2, range(200), options=opts)
    assert z.shape[1] == two_band_layout.frame_samples()
    assert 0.9 < np.mean(np.abs(z) ** 2) <= 1.02


def test_edge_window_identity_and_interior():
    x = np.random.default_rng(0).standard_normal(64) + 0j
    np.testing.assert_array_equal(apply_edge_window(x, 0, cp_samples=8), x)
    y = apply_edge_window(x, 4, cp_samples=8)
    np.testing.assert_array_equal(y[4:-4], x[4:-4])
    assert np.all(np.abs(y[:4]) <= np.abs(x[:4]))
    with pytest.raises(ValueError):
        apply_edge_window(x, 5, cp_samples=8)


def test_windowed_frames_lose_power(small_layout):
    plain = synthesize_frames(small_layout, 8, range(100))
    windowed = synthesize_frames(small_layout, 8, range(100), options=WaveformOptions(window_rolloff=4))
    assert np.mean(np.abs(windowed) ** 2) <= np.mean(np.abs(plain) ** 2)
    with pytest.raises(ValueError):
        synthesize_frames(small_layout, 8, range(1), options=WaveformOptions(window_rolloff=40))


# -- dumps ------------------------------------------------------------------------

def test_frame_dump_round_trip(tmp_path, small_layout):
    frame = synthesize_lcm_frame(small_layout, trial_stream(0, 0))
    path = tmp_path / "f.bin"
    write_frame_dump(path, frame)
    raw = path.read_bytes()
    assert raw[:4] == b"MNPL"
    assert len(raw) == 24 + 16 * len(frame)
    back = read_frame_dump(path)
    np.testing.assert_array_equal(back.samples, frame.samples)
    assert back.sample_rate_hz == frame.sample_rate_hz


def test_frame_dump_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"XXXX" + bytes(20))
    with pytest.raises(ValueError):
        read_frame_dump(path)


def test_sampled_signal_metadata(small_layout):
    frame = synthesize_lcm_frame(small_layout, trial_stream(0, 1))
    assert isinstance(frame, SampledSignal)
    assert frame.duration_s == pytest.approx(small_layout.frame_duration_s)
    assert frame.sample_rate_hz == small_layout.sample_rate_hz()
