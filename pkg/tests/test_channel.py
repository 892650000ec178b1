from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate, special

from scsfri.channel import (
    KernelConfig,
    PathSpec,
    Scatterer,
    ScattererScene,
    azimuthal_density,
    build_correlation_matrix,
    channel_dft_model,
    channel_impulse_samples,
    dirichlet_derivative,
    dirichlet_kernel,
    draw_fading,
    fading_factors,
    kappa_from_geometry,
    noise_variance,
    sample_channel,
    sample_received,
    spatial_correlation,
    spatial_correlation_gaussian,
    spatial_correlation_quadrature,
    von_mises_fit_divergence,
    von_mises_pdf,
)
from scsfri.errors import CorrelationModelError, InputError
from scsfri.pilots import dft_bin

KERNEL = KernelConfig(tau=1.0, M=3, N=9)


def _direct_kernel(t: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    m = np.arange(-cfg.M, cfg.M + 1)
    return np.real(np.exp(2j * np.pi * np.multiply.outer(t, m) / cfg.tau).sum(axis=-1)) / (2 * cfg.M + 1)


def _scene(kappa: float = 40.0) -> ScattererScene:
    return ScattererScene.ring(
        5,
        0.1,
        carrier_frequency=2.6e9,
        wave_speed=299_792_458.0,
        scatterers=[Scatterer(azimuth=0.4, kappa=kappa, toa=0.1, amplitude=1.0)],
    )


def test_kernel_config_rejects_undersampling() -> None:
    with pytest.raises(InputError):
        KernelConfig(tau=1.0, M=5, N=10)
    with pytest.raises(InputError):
        KernelConfig(tau=0.0, M=1, N=3)


def test_kernel_is_one_at_origin_and_zero_at_bandwidth_nulls() -> None:
    assert dirichlet_kernel(0.0, KERNEL) == pytest.approx(1.0)
    assert dirichlet_kernel(KERNEL.tau, KERNEL) == pytest.approx(1.0)
    assert dirichlet_kernel(1.0 / KERNEL.bandwidth, KERNEL) == pytest.approx(0.0, abs=1e-12)


def test_kernel_matches_fourier_series_including_singular_band() -> None:
    t = np.concatenate([np.linspace(-1.2, 2.3, 401), [1e-9, -1e-9, 3e-4, 1.0 - 3e-4, 1.0 + 1e-12]])

    np.testing.assert_allclose(dirichlet_kernel(t, KERNEL), _direct_kernel(t, KERNEL), atol=1e-12)


def test_kernel_derivative_matches_finite_difference() -> None:
    t = np.concatenate([np.linspace(0.01, 0.99, 50), [0.0, 1e-5, 0.9999]])
    h = 1e-6
    numeric = (dirichlet_kernel(t + h, KERNEL) - dirichlet_kernel(t - h, KERNEL)) / (2 * h)

    np.testing.assert_allclose(dirichlet_derivative(t, KERNEL), numeric, atol=1e-5)
    assert dirichlet_derivative(0.0, KERNEL) == pytest.approx(0.0, abs=1e-12)


def test_sampled_channel_dft_is_flat_in_band_and_zero_outside() -> None:
    kernel = KernelConfig(tau=2.0, M=4, N=13)
    paths = [PathSpec(toa=0.3, expected_amplitude=1.0), PathSpec(toa=1.1, expected_amplitude=0.5)]
    real = sample_channel(kernel, paths, antennas=3, seed=4)

    spectrum = np.fft.fft(channel_impulse_samples(real), axis=0) / kernel.N
    band = np.arange(-kernel.M, kernel.M + 1)

    np.testing.assert_allclose(spectrum[dft_bin(band, kernel.N)], channel_dft_model(real), atol=1e-12)
    outside = np.setdiff1d(np.arange(kernel.N), dft_bin(band, kernel.N))
    np.testing.assert_allclose(spectrum[outside], 0, atol=1e-12)


def test_sample_channel_is_reproducible_from_seed() -> None:
    paths = [PathSpec(toa=0.1, expected_amplitude=1.0), PathSpec(toa=0.6, expected_amplitude=0.3)]

    first = sample_channel(KERNEL, paths, antennas=4, epsilon=0.01, seed=11)
    second = sample_channel(KERNEL, paths, antennas=4, epsilon=0.01, seed=11)
    other = sample_channel(KERNEL, paths, antennas=4, epsilon=0.01, seed=12)

    np.testing.assert_array_equal(first.gains, second.gains)
    np.testing.assert_array_equal(first.toas, second.toas)
    assert not np.allclose(first.gains, other.gains)
    assert first.K == 2 and first.P == 4


def test_jitter_stays_within_epsilon() -> None:
    paths = [PathSpec(toa=0.2, expected_amplitude=1.0), PathSpec(toa=0.5, expected_amplitude=1.0)]
    real = sample_channel(KERNEL, paths, antennas=16, epsilon=0.01, seed=3)

    offsets = real.toas - real.nominal_toas[:, np.newaxis]
    assert np.max(np.abs(offsets)) <= 0.01
    assert np.any(offsets != 0)


@pytest.mark.parametrize(
    "toas",
    [
        [0.2, 0.2],
        [0.0, 1.0],
        [-0.1, 0.5],
    ],
)
def test_sample_channel_rejects_invalid_toas(toas: list[float]) -> None:
    paths = [PathSpec(toa=t, expected_amplitude=1.0) for t in toas]
    with pytest.raises(InputError):
        sample_channel(KERNEL, paths, antennas=2)


def test_sample_channel_needs_antenna_count_without_scene() -> None:
    with pytest.raises(InputError):
        sample_channel(KERNEL, [PathSpec(toa=0.1, expected_amplitude=1.0)])


def test_noise_variance_matches_input_snr() -> None:
    assert noise_variance([1.0], KERNEL, 0.0) == pytest.approx(1.0 / 7.0)
    assert noise_variance([1.0, 1.0], KERNEL, 10.0) == pytest.approx(2.0 / 70.0)


def test_received_noise_has_requested_variance() -> None:
    kernel = KernelConfig(tau=1.0, M=1, N=20001)
    real = sample_channel(kernel, [PathSpec(toa=0.5, expected_amplitude=0.0)], antennas=2, seed=0)

    noise = sample_received(real, 2.0, seed=5)

    assert np.mean(np.abs(noise) ** 2) == pytest.approx(2.0, rel=0.05)
    assert np.var(noise.real) == pytest.approx(1.0, rel=0.05)


def test_received_waveform_length_is_checked() -> None:
    real = sample_channel(KERNEL, [PathSpec(toa=0.5, expected_amplitude=1.0)], antennas=1)
    with pytest.raises(InputError):
        sample_received(real, 0.0, waveform=np.ones(KERNEL.N + 1))


def test_kappa_from_geometry_solves_defining_equation() -> None:
    kappa = kappa_from_geometry(30.0, 3.0)

    assert (1 - math.exp(-0.75 * kappa)) * kappa == pytest.approx(100.0, rel=1e-10)
    assert kappa_from_geometry(80.0, 8.0) == pytest.approx(kappa)


def test_densities_integrate_to_one() -> None:
    vm, _ = integrate.quad(lambda v: von_mises_pdf(v, 25.0), -np.pi, np.pi)
    gaussian, _ = integrate.quad(lambda v: azimuthal_density(v, 25.0), -np.pi, np.pi, limit=200)

    assert vm == pytest.approx(1.0, rel=1e-8)
    assert gaussian == pytest.approx(1.0, rel=1e-6)


def test_isotropic_scatterer_gives_bessel_correlation() -> None:
    scene = _scene(kappa=0.0)
    x = scene.carrier_omega * scene.antenna_distance(0, 2) / scene.wave_speed

    assert spatial_correlation(scene, 0, 0, 2) == pytest.approx(complex(special.j0(x)), abs=1e-12)


@pytest.mark.parametrize("pair", [(0, 1), (0, 2), (1, 3), (4, 2)])
def test_series_correlation_matches_quadrature(pair: tuple[int, int]) -> None:
    scene = _scene(kappa=12.0)

    series = spatial_correlation(scene, 0, *pair)
    quadrature = spatial_correlation_quadrature(scene, 0, *pair)

    assert abs(series - quadrature) < 1e-9


def test_gaussian_form_approaches_series_for_narrow_scatterers() -> None:
    scene = _scene(kappa=2000.0)

    assert abs(spatial_correlation_gaussian(scene, 0, 0, 2) - spatial_correlation(scene, 0, 0, 2)) < 1e-2


def test_correlation_matrix_is_hermitian_unit_diagonal_psd() -> None:
    matrix = build_correlation_matrix(_scene(), 0)

    np.testing.assert_allclose(matrix, matrix.conj().T, atol=1e-14)
    np.testing.assert_allclose(np.diag(matrix), 1.0)
    assert np.linalg.eigvalsh(matrix)[0] >= -1e-10


def test_correlation_is_invariant_under_rotation_of_the_scene() -> None:
    scene = _scene()

    np.testing.assert_allclose(
        build_correlation_matrix(scene.rotated(1.1), 0), build_correlation_matrix(scene, 0), atol=1e-10
    )


def test_correlated_gains_follow_scene() -> None:
    scene = _scene(kappa=5.0)
    paths = scene.paths()
    draws = np.stack([sample_channel(KERNEL, paths, scene=scene, seed=s).fading[0] for s in range(3000)])

    empirical = draws.T @ draws.conj() / draws.shape[0]

    np.testing.assert_allclose(empirical, build_correlation_matrix(scene, 0), atol=0.1)


@pytest.mark.parametrize("kappa_prime", [0.5, 1.0, 5.0, 20.0, 100.0])
def test_von_mises_fit_stays_close_to_azimuthal_density(kappa_prime: float) -> None:
    divergence = von_mises_fit_divergence(kappa_prime)

    assert 0.0 <= divergence < 0.02


def test_von_mises_fit_needs_positive_concentration() -> None:
    with pytest.raises(InputError):
        von_mises_fit_divergence(0.0)


def _pair_scene(kappa: float, spacing: float, azimuth: float) -> ScattererScene:
    return ScattererScene(
        carrier_omega=2 * np.pi,
        wave_speed=1.0,
        antennas=((0.0, 0.0), (spacing, 0.0)),
        scatterers=(Scatterer(azimuth=azimuth, kappa=kappa, toa=0.1, amplitude=1.0),),
    )


@pytest.mark.parametrize("kappa", [0.0, 0.5, 4.0, 20.0, 50.0])
@pytest.mark.parametrize("spacing", [0.1, 0.5, 1.0, 2.0])
@pytest.mark.parametrize("azimuth", [0.0, 0.7, 1.6, 3.0, 4.5])
def test_series_matches_quadrature_across_geometries(kappa: float, spacing: float, azimuth: float) -> None:
    scene = _pair_scene(kappa, spacing, azimuth)

    series = spatial_correlation(scene, 0, 0, 1)
    quadrature = spatial_correlation_quadrature(scene, 0, 0, 1)

    assert abs(series - quadrature) < 1e-8


def test_fading_draws_have_unit_power_and_scene_correlation() -> None:
    scene = _scene(kappa=5.0)
    factors = fading_factors(scene.paths(), scene.antenna_count, scene)
    rng = np.random.default_rng(21)

    draws = np.stack([draw_fading(factors, rng)[0] for _ in range(100_000)])
    empirical = draws.T @ draws.conj() / draws.shape[0]

    np.testing.assert_allclose(np.diag(empirical).real, 1.0, atol=0.02)
    np.testing.assert_allclose(empirical, build_correlation_matrix(scene, 0), atol=0.02)


def test_indefinite_correlation_matrix_is_rejected(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setattr("scsfri.channel.spatial_correlation", lambda *args, **kwargs: 1.5)

    with pytest.raises(CorrelationModelError):
        build_correlation_matrix(_scene(), 0)
