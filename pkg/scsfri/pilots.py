"""Pilot layouts and extraction of channel DFT coefficients from samples.

DFT indices use the signed convention {-N/2, ..., N/2-1}; ``dft_bin`` maps
them to numpy's 0..N-1 bins. WHT matrices follow Sylvester (natural) order.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
import numpy.typing as npt
from scipy import linalg

from scsfri.channel import KernelConfig
from scsfri.errors import AliasingError, LayoutError
from scsfri.numerics import ComplexMatrix, as_complex_matrix

logger = logging.getLogger(__name__)

LayoutKind = Literal["contiguous-dft", "scattered-dft", "wht"]
MAX_WHT_ORDER = 12


@dataclass(frozen=True)
class PilotLayout:
    kind: LayoutKind
    M: int = 0
    D: int = 1
    wht_n: int | None = None
    wht_ell: int | None = None
    delay_spread: float | None = None

    def __post_init__(self) -> None:
        if self.kind == "wht":
            if self.wht_n is None or self.wht_ell is None:
                raise LayoutError("wht layouts need wht_n and wht_ell")
            _check_wht_orders(self.wht_n, self.wht_ell)
            object.__setattr__(self, "D", 2 ** (self.wht_n - self.wht_ell))
            object.__setattr__(self, "M", 2 ** (self.wht_ell - 1))
            return

        if self.M < 1:
            raise LayoutError("M must be >= 1")
        if self.D < 1:
            raise LayoutError("D must be >= 1")
        if self.kind == "contiguous-dft" and self.D != 1:
            raise LayoutError("contiguous layouts have D = 1")

    @classmethod
    def contiguous(cls, M: int) -> PilotLayout:
        return cls(kind="contiguous-dft", M=M, D=1)

    @classmethod
    def scattered(cls, M: int, D: int, delay_spread: float | None = None) -> PilotLayout:
        return cls(kind="scattered-dft", M=M, D=D, delay_spread=delay_spread)

    @classmethod
    def wht(cls, n: int, ell: int) -> PilotLayout:
        return cls(kind="wht", wht_n=n, wht_ell=ell)

    @property
    def pilot_count(self) -> int:
        if self.kind == "wht":
            return 2 ** int(self.wht_ell)  # type: ignore[arg-type]
        return 2 * self.M + 1


def _check_wht_orders(n: int, ell: int) -> None:
    if not 1 <= n <= MAX_WHT_ORDER:
        raise LayoutError(f"n must be in [1, {MAX_WHT_ORDER}]")
    if not 1 <= ell <= n - 1:
        raise LayoutError("ell must be in [1, n-1]")


def check_aliasing(layout: PilotLayout, tau: float) -> None:
    """Reject pilot gaps that alias a CIR of the layout's delay spread."""
    if layout.delay_spread is None or layout.delay_spread <= 0:
        return
    if layout.D >= tau / layout.delay_spread:
        raise AliasingError(
            f"pilot gap D={layout.D} aliases a delay spread of {layout.delay_spread:g} s "
            f"(needs D < {tau / layout.delay_spread:.3f})"
        )


def scattered_indices(layout: PilotLayout, tau: float | None = None) -> list[int]:
    """Signed DFT indices {mD : |m| <= M} of a DFT pilot layout."""
    if layout.kind == "wht":
        raise LayoutError("scattered_indices applies to DFT layouts")
    if tau is not None:
        check_aliasing(layout, tau)
    return [m * layout.D for m in range(-layout.M, layout.M + 1)]


def pilot_grid(layout: PilotLayout) -> npt.NDArray[np.float64]:
    """Pilot-domain grid g with DFT index g·D.

    DFT layouts use g = -M..M. A WHT layout puts its 2^ℓ DFT pilots on the odd
    multiples of D/2, which is the centred half-integer grid.
    """
    count = layout.pilot_count
    return np.arange(count) - (count - 1) / 2.0


def pilot_dft_indices(layout: PilotLayout) -> npt.NDArray[np.int64]:
    return np.rint(pilot_grid(layout) * layout.D).astype(np.int64)


def dft_bin(indices: npt.ArrayLike, N: int) -> npt.NDArray[np.int64]:
    return np.mod(np.asarray(indices, dtype=np.int64), N)


def signed_dft_index(bins: npt.ArrayLike, N: int) -> npt.NDArray[np.int64]:
    values = np.mod(np.asarray(bins, dtype=np.int64), N)
    return np.where(values >= N // 2 + N % 2, values - N, values)


def sample_dft(samples: npt.ArrayLike) -> ComplexMatrix:
    """DFT normalized so a band-limited channel gives φ̂[m]·Σ c W^{m t}."""
    y = as_complex_matrix(samples, "samples")
    return np.fft.fft(y, axis=0) / y.shape[0]


def sylvester_wht(n: int) -> npt.NDArray[np.float64]:
    """Orthonormal 2^n-point Walsh-Hadamard matrix in Sylvester order."""
    if not 1 <= n <= MAX_WHT_ORDER:
        raise LayoutError(f"n must be in [1, {MAX_WHT_ORDER}]")
    return linalg.hadamard(2**n).astype(np.float64) / math.sqrt(2**n)


def wht_dft_pilot_map(n: int, ell: int) -> tuple[list[int], list[int]]:
    """1-based WHT codeword indices and the DFT indices spanning the same subspace."""
    _check_wht_orders(n, ell)
    gap = 2 ** (n - ell)
    count = 2**ell
    wht_indices = [count + i for i in range(1, count + 1)]
    dft_indices = [(2 * i - 1) * gap // 2 + 1 for i in range(1, count + 1)]
    return wht_indices, dft_indices


def dft_columns(n: int, indices_1based: list[int]) -> ComplexMatrix:
    size = 2**n
    k = np.asarray(indices_1based) - 1
    return np.exp(-2j * np.pi * np.outer(np.arange(size), k) / size)


def projection_residual(basis: npt.ArrayLike, vectors: npt.ArrayLike) -> float:
    """Largest norm of a column of ``vectors`` outside span(``basis``)."""
    q = linalg.orth(np.asarray(basis, dtype=np.complex128))
    cols = np.asarray(vectors, dtype=np.complex128)
    outside = cols - q @ (q.conj().T @ cols)
    return float(np.max(np.linalg.norm(outside, axis=0) / np.linalg.norm(cols, axis=0)))


def mutual_projection_residual(n: int, ell: int) -> float:
    """Subspace mismatch between the paired WHT and DFT columns, both ways."""
    wht_indices, dft_indices = wht_dft_pilot_map(n, ell)
    wht = sylvester_wht(n)[:, np.asarray(wht_indices) - 1]
    dft = dft_columns(n, dft_indices)
    return max(projection_residual(wht, dft), projection_residual(dft, wht))


def wht_pilot_waveform(n: int, ell: int) -> npt.NDArray[np.float64]:
    """Time frame carrying unit pilots on the layout's WHT codewords."""
    wht_indices, _ = wht_dft_pilot_map(n, ell)
    return sylvester_wht(n)[:, np.asarray(wht_indices) - 1].sum(axis=1)


def extract_channel_dft(
    samples: npt.ArrayLike, layout: PilotLayout, kernel: KernelConfig
) -> ComplexMatrix:
    """Channel coefficients on the pilot grid, one column per antenna.

    Row i holds Σ_k c_{k,p} W^{g_i D t_k} (plus noise) for g = pilot_grid(layout).
    WHT frames are first projected onto the pilot codewords, then read in the
    equivalent DFT basis.
    """
    y = as_complex_matrix(samples, "samples")
    if y.shape[0] != kernel.N:
        raise LayoutError(f"expected {kernel.N} samples per antenna, got {y.shape[0]}")
    if layout.kind == "scattered-dft":
        check_aliasing(layout, kernel.tau)

    indices = pilot_dft_indices(layout)
    if np.max(np.abs(indices)) > kernel.M:
        raise LayoutError(f"pilot index {int(np.max(np.abs(indices)))} outside the band |m| <= {kernel.M}")
    bins = dft_bin(indices, kernel.N)

    pilot_spectrum = np.ones(bins.size, dtype=np.complex128)
    if layout.kind == "wht":
        n, ell = int(layout.wht_n), int(layout.wht_ell)  # type: ignore[arg-type]
        if kernel.N != 2**n:
            raise LayoutError(f"wht layout of order {n} needs N = {2**n}")
        wht_indices, _ = wht_dft_pilot_map(n, ell)
        codewords = sylvester_wht(n)[:, np.asarray(wht_indices) - 1]
        y = codewords @ (codewords.T @ y)
        pilot_spectrum = np.fft.fft(wht_pilot_waveform(n, ell))[bins]

    spectrum = sample_dft(y)
    logger.debug("extracted %d pilots (%s, D=%d)", bins.size, layout.kind, layout.D)
    return spectrum[bins] / (kernel.flat_gain * pilot_spectrum[:, np.newaxis])
