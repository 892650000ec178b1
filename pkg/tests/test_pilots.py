from __future__ import annotations

import numpy as np
import pytest

from scsfri.channel import KernelConfig, PathSpec, frequency_response, sample_channel, sample_received
from scsfri.errors import AliasingError, LayoutError
from scsfri.pilots import (
    PilotLayout,
    check_aliasing,
    dft_bin,
    extract_channel_dft,
    mutual_projection_residual,
    pilot_dft_indices,
    pilot_grid,
    scattered_indices,
    signed_dft_index,
    sylvester_wht,
    wht_dft_pilot_map,
    wht_pilot_waveform,
)

TAU = 511 * 50e-9


def test_reference_layout_has_63_pilots_eight_apart() -> None:
    layout = PilotLayout.scattered(31, 8, 1.6e-6)

    indices = scattered_indices(layout, TAU)

    assert len(indices) == 63 == layout.pilot_count
    assert indices[0] == -248 and indices[-1] == 248
    assert set(np.diff(indices)) == {8}
    np.testing.assert_array_equal(pilot_dft_indices(layout), indices)


def test_pilot_gap_must_not_alias_delay_spread() -> None:
    check_aliasing(PilotLayout.scattered(31, 15, 1.6e-6), TAU)
    with pytest.raises(AliasingError):
        check_aliasing(PilotLayout.scattered(31, 16, 1.6e-6), TAU)
    with pytest.raises(LayoutError):
        scattered_indices(PilotLayout.scattered(31, 16, 1.6e-6), TAU)


def test_layout_validation() -> None:
    with pytest.raises(LayoutError):
        PilotLayout(kind="contiguous-dft", M=4, D=2)
    with pytest.raises(LayoutError):
        PilotLayout.scattered(0, 4)
    with pytest.raises(LayoutError):
        PilotLayout.wht(3, 3)


def test_wht_layout_derives_gap_and_count() -> None:
    layout = PilotLayout.wht(5, 2)

    assert layout.D == 8
    assert layout.M == 2
    assert layout.pilot_count == 4
    np.testing.assert_allclose(pilot_grid(layout), [-1.5, -0.5, 0.5, 1.5])
    np.testing.assert_array_equal(pilot_dft_indices(layout), [-12, -4, 4, 12])


def test_wht_map_for_four_point_transform() -> None:
    assert wht_dft_pilot_map(2, 1) == ([3, 4], [2, 4])


def test_sylvester_matrix_is_orthonormal() -> None:
    h = sylvester_wht(4)

    np.testing.assert_allclose(h @ h.T, np.eye(16), atol=1e-12)
    np.testing.assert_allclose(h[1], np.tile([1, -1], 8) / 4)


@pytest.mark.parametrize("n, ell", [(n, ell) for n in range(2, 9) for ell in range(1, n)])
def test_wht_pilots_span_the_paired_dft_columns(n: int, ell: int) -> None:
    assert mutual_projection_residual(n, ell) < 1e-12


def test_signed_index_inverts_dft_bin() -> None:
    indices = np.arange(-8, 8)

    np.testing.assert_array_equal(signed_dft_index(dft_bin(indices, 16), 16), indices)
    np.testing.assert_array_equal(signed_dft_index(dft_bin(np.arange(-8, 9), 17), 17), np.arange(-8, 9))


def test_scattered_extraction_reads_channel_response_at_pilots() -> None:
    kernel = KernelConfig(tau=1.0, M=20, N=41)
    layout = PilotLayout.scattered(4, 4)
    paths = [PathSpec(toa=0.05, expected_amplitude=1.0), PathSpec(toa=0.19, expected_amplitude=0.6)]
    real = sample_channel(kernel, paths, antennas=3, seed=8)

    coeffs = extract_channel_dft(sample_received(real, 0.0), layout, kernel)

    np.testing.assert_allclose(coeffs, frequency_response(real, pilot_dft_indices(layout)), atol=1e-12)


def test_wht_extraction_recovers_response_through_the_codewords() -> None:
    kernel = KernelConfig(tau=1.0, M=15, N=32)
    layout = PilotLayout.wht(5, 2)
    paths = [PathSpec(toa=0.02, expected_amplitude=1.0), PathSpec(toa=0.09, expected_amplitude=0.8)]
    real = sample_channel(kernel, paths, antennas=2, seed=9)

    samples = sample_received(real, 0.0, waveform=wht_pilot_waveform(5, 2))
    coeffs = extract_channel_dft(samples, layout, kernel)

    np.testing.assert_allclose(coeffs, frequency_response(real, pilot_dft_indices(layout)), atol=1e-10)


def test_extraction_checks_frame_length_and_band() -> None:
    kernel = KernelConfig(tau=1.0, M=10, N=21)
    real = sample_channel(kernel, [PathSpec(toa=0.1, expected_amplitude=1.0)], antennas=1)
    samples = sample_received(real, 0.0)

    with pytest.raises(LayoutError):
        extract_channel_dft(samples[:-1], PilotLayout.scattered(2, 2), kernel)
    with pytest.raises(LayoutError):
        extract_channel_dft(samples, PilotLayout.scattered(4, 3), kernel)
    with pytest.raises(LayoutError):
        extract_channel_dft(samples, PilotLayout.wht(4, 2), kernel)
