import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcinject.spectral import FrequencyBand, band_mask, fft2d, ifft2d
from dcinject.tensorimg import Image, image_new
from dcinject.trigger import (
    NoiseComponents,
    TriggerConfig,
    adaptive_noise,
    apply_trigger,
    apply_trigger_with_residual,
    badnet_patch,
    hvs_weights,
    noise_components,
    remove_dc,
    spectral_mean_mu,
    texture_scale,
    trigger_batch,
    trigger_rng,
)
from oracles import direct_dft2

DC_ONLY = FrequencyBand(0.01)


def test_mu_constant_image_via_oracle():
    # oracle: all four coefficients of the 2x2 constant 0.5 image
    coeffs = direct_dft2(np.full((2, 2), 0.5))
    expected = np.abs(coeffs).mean()
    assert expected == pytest.approx(0.5, abs=1e-15)
    mu = spectral_mean_mu(fft2d(image_new(2, 2, 1, 0.5)))
    assert mu[0] == pytest.approx(expected, abs=1e-15)


def test_mu_zero_and_single():
    assert spectral_mean_mu(fft2d(image_new(3, 3, 1, 0.0)))[0] == 0.0
    assert spectral_mean_mu(fft2d(image_new(1, 1, 1, 0.3)))[0] == pytest.approx(0.3)


def test_mu_is_per_channel():
    x = np.stack([np.full((2, 2), 0.5), np.zeros((2, 2)), np.full((2, 2), 1.0)])
    np.testing.assert_allclose(spectral_mean_mu(fft2d(Image(x))), [0.5, 0.0, 1.0])


def test_remove_dc_zero_delta_is_identity():
    spec = fft2d(Image(np.random.default_rng(0).uniform(size=(1, 5, 5))))
    np.testing.assert_array_equal(remove_dc(spec, 0.0, FrequencyBand(0.5)).data, spec.data)


def test_remove_dc_worked_example():
    out = remove_dc(fft2d(image_new(2, 2, 1, 0.5)), 1.0, DC_ONLY).data[0]
    expected = np.zeros((2, 2), dtype=complex)
    expected[0, 0] = 1.5
    np.testing.assert_allclose(out, expected, atol=1e-15)


def test_remove_dc_zero_spectrum():
    spec = fft2d(image_new(4, 4, 1, 0.0))
    assert np.all(remove_dc(spec, 0.7, FrequencyBand(1.0)).data == 0)


def test_remove_dc_touches_only_band_real_parts():
    spec = fft2d(Image(np.random.default_rng(1).uniform(size=(3, 8, 8))))
    band = FrequencyBand(0.5)
    out = remove_dc(spec, 0.6, band).data
    mask = band_mask(8, 8, band)
    np.testing.assert_array_equal(out[:, ~mask], spec.data[:, ~mask])
    np.testing.assert_array_equal(out.imag, spec.data.imag)
    mu = np.abs(spec.data).mean(axis=(1, 2))
    np.testing.assert_allclose((spec.data.real - out.real)[:, mask], np.repeat(0.6 * mu[:, None], mask.sum(), 1))


def test_hvs_dc_and_radius_one():
    w = hvs_weights(8, 8)
    assert w[0, 0] == 1.0
    # r0 = 8 / 8 = 1, so radius 1 gives 1 / (1 + 1) = 0.5
    assert w[1, 0] == 0.5 and w[0, 7] == 0.5
    assert w[1, 1] == pytest.approx(1 / (1 + np.sqrt(2)))


@given(st.integers(1, 20), st.integers(1, 20))
def test_hvs_symmetric_and_bounded(h, w):
    wt = hvs_weights(h, w)
    neg = wt[(-np.arange(h)) % h][:, (-np.arange(w)) % w]
    np.testing.assert_array_equal(wt, neg)
    assert wt[0, 0] == 1.0 and np.all(wt > 0) and np.all(wt <= 1)


def test_texture_scale_flat():
    assert texture_scale(image_new(6, 6, 1, 0.4)) == 0.5


def test_texture_scale_checkerboard():
    board = (np.indices((4, 4)).sum(0) % 2).astype(float)[None]
    # hand evaluation: each interior pixel v has four neighbours 1 - v, so the
    # Laplacian is 4(1 - v) - 4v = +-4; RMS s = 4 and S = 4 / 4.1 + 0.5
    assert texture_scale(Image(board)) == pytest.approx(1.4756097560975610, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 9), st.integers(1, 9))
def test_texture_scale_range(seed, h, w):
    s = texture_scale(Image(np.random.default_rng(seed).uniform(size=(1, h, w))))
    assert 0.5 <= s < 1.5


def _comps(h, w, rho=0.5, s=1.2):
    return NoiseComponents(band_mask(h, w, FrequencyBand(rho)).astype(float), hvs_weights(h, w), s)


def test_noise_zero_epsilon():
    cfg = TriggerConfig(epsilon=0.0)
    out = adaptive_noise(6, 6, cfg, _comps(6, 6), np.random.default_rng(0))
    assert np.all(out.data == 0)


def test_noise_dc_support():
    cfg = TriggerConfig(epsilon=1.0, band=DC_ONLY, use_whvs=False, use_scale=False)
    comps = NoiseComponents(band_mask(4, 4, DC_ONLY).astype(float), hvs_weights(4, 4), 1.0)
    out = adaptive_noise(4, 4, cfg, comps, np.random.default_rng(1)).data[0].copy()
    assert out[0, 0] != 0
    out[0, 0] = 0
    assert np.all(out == 0)


def test_noise_all_toggles_off_is_plain_gaussian():
    cfg = TriggerConfig(epsilon=0.7, use_mfreq=False, use_whvs=False, use_scale=False)
    rng = np.random.default_rng(5)
    draws = np.stack([adaptive_noise(4, 4, cfg, _comps(4, 4), rng).data for _ in range(4000)])
    assert np.all(draws != 0)
    np.testing.assert_allclose(draws.real.std(axis=0), 0.7, rtol=0.06)
    np.testing.assert_allclose(draws.imag.std(axis=0), 0.7, rtol=0.06)


def test_noise_monte_carlo_std():
    # coefficient (1, 0) of an 8x8 grid: in band, w_hvs = 0.5, scale 1.2 -> g = 0.6
    eps = 0.3
    cfg = TriggerConfig(epsilon=eps)
    comps = _comps(8, 8, rho=0.5, s=1.2)
    rng = np.random.default_rng(2024)
    samples = np.array([adaptive_noise(8, 8, cfg, comps, rng).data[0, 1, 0] for _ in range(10_000)])
    g = 1.0 * 0.5 * 1.2
    assert abs(samples.real.std() - eps * g) <= 0.03 * eps * g
    assert abs(samples.imag.std() - eps * g) <= 0.03 * eps * g


def test_default_epsilon_scaling():
    assert TriggerConfig().resolved_epsilon(16, 16) == pytest.approx(0.8)
    assert TriggerConfig(epsilon=0.2).resolved_epsilon(16, 16) == 0.2


def test_identity_pipeline():
    img = Image(np.random.default_rng(0).uniform(size=(3, 7, 6)))
    out = apply_trigger(img, TriggerConfig(delta=0.0, epsilon=0.0), trigger_rng(0, 0))
    np.testing.assert_allclose(out.data, img.data, atol=1e-9)


def test_worked_constant_example():
    cfg = TriggerConfig(delta=1.0, epsilon=0.0, band=DC_ONLY)
    out = apply_trigger(image_new(2, 2, 1, 0.5), cfg, trigger_rng(0, 0))
    np.testing.assert_allclose(out.data, 0.375, atol=1e-12, rtol=0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.floats(0, 20), st.floats(0.01, 1))
def test_output_in_unit_range(seed, delta, eps, rho):
    img = Image(np.random.default_rng(seed).uniform(size=(1, 6, 6)))
    cfg = TriggerConfig(delta=delta, epsilon=eps, band=FrequencyBand(rho))
    out = apply_trigger(img, cfg, trigger_rng(seed, 1))
    assert out.data.min() >= 0 and out.data.max() <= 1


def test_determinism_bitwise():
    img = Image(np.random.default_rng(9).uniform(size=(3, 8, 8)))
    cfg = TriggerConfig(delta=0.8, band=FrequencyBand(0.5), use_mfreq=False)
    a = apply_trigger(img, cfg, trigger_rng(cfg.seed, 17))
    b = apply_trigger(img, cfg, trigger_rng(cfg.seed, 17))
    c = apply_trigger(img, cfg, trigger_rng(cfg.seed, 18))
    assert a.data.tobytes() == b.data.tobytes()
    assert a.data.tobytes() != c.data.tobytes()


def test_batch_matches_single():
    x = np.random.default_rng(4).uniform(size=(5, 1, 8, 8))
    cfg = TriggerConfig(delta=0.9, band=FrequencyBand(0.5), seed=7)
    counters = np.array([3, 1, 4, 1, 5])
    batch, resid = trigger_batch(x, cfg, counters, stream=2)
    for i in range(5):
        single, r = apply_trigger_with_residual(Image(x[i]), cfg, trigger_rng(7, counters[i], 2))
        np.testing.assert_allclose(batch[i], single.data, atol=1e-14)
        assert resid[i] == pytest.approx(r, abs=1e-14)


def test_zero_noise_changes_only_band():
    img = Image(np.random.default_rng(3).uniform(0.3, 0.7, size=(1, 12, 12)))
    band = FrequencyBand(0.4)
    before_clip, resid = ifft2d(remove_dc(fft2d(img), 0.9, band))
    assert resid < 1e-12
    diff = np.abs(fft2d(before_clip) - fft2d(img.data))[0]
    assert np.all(diff[~band_mask(12, 12, band)] < 1e-8)
    assert np.all(diff[band_mask(12, 12, band)] > 1e-3)


@pytest.mark.parametrize("value", [0.2, 0.6])
def test_monotone_stealth_on_constant_images(value):
    img = image_new(8, 8, 1, value)
    mses = []
    for delta in np.linspace(0, 1, 11):
        cfg = TriggerConfig(delta=float(delta), epsilon=0.0, band=FrequencyBand(0.5))
        out = apply_trigger(img, cfg, trigger_rng(0, 0))
        mses.append(np.mean((out.data - img.data) ** 2))
    assert all(b >= a for a, b in zip(mses, mses[1:]))
    assert mses[-1] > 0


def test_noise_components_invariants():
    img = Image(np.random.default_rng(0).uniform(size=(1, 8, 8)))
    comps = noise_components(img, TriggerConfig(band=FrequencyBand(0.25)))
    assert set(np.unique(comps.m_freq)) <= {0.0, 1.0}
    assert comps.w_hvs[0, 0] == 1.0 and 0.5 <= comps.s < 1.5


def test_badnet_full_cover():
    img = Image(np.random.default_rng(0).uniform(size=(3, 4, 4)))
    assert np.all(badnet_patch(img, 4, 0.25).data == 0.25)


def test_badnet_single_pixel_and_idempotent():
    img = image_new(5, 5, 3, 0.0)
    once = badnet_patch(img, 1, 1.0)
    assert np.count_nonzero(once.data) == 3
    assert np.all(once.data[:, 4, 4] == 1.0)
    assert badnet_patch(once, 1, 1.0) == once


def test_badnet_oversized():
    with pytest.raises(ValueError):
        badnet_patch(image_new(3, 3, 1, 0.0), 4, 1.0)


def test_badnet_kind_dispatch():
    img = image_new(4, 4, 1, 0.0)
    out = apply_trigger(img, TriggerConfig(kind="badnet", patch_side=2), trigger_rng(0, 0))
    assert out.data[0, 2:, 2:].min() == 1.0 and out.data[0, :2].max() == 0.0


@pytest.mark.parametrize("kw", [dict(delta=1.5), dict(epsilon=-1.0), dict(poison_ratio=2.0), dict(kind="x")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TriggerConfig(**kw)
