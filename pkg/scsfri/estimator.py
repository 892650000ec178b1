"""Common-support FRI estimation of multipath channels from pilot coefficients.

Coefficients arrive as a Q×P matrix: row i is the pilot-domain sample at grid
position g_i (DFT index g_i·D) for every antenna. A symmetric layout has
Q = 2M+1 and g = -M..M. The data matrix stacks one Toeplitz block per antenna;
block row r, column c holds the coefficient at sequence position L-1+r-c.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import numpy.typing as npt
from scipy import linalg

from scsfri.channel import KernelConfig
from scsfri.errors import DegenerateGeometryError, IllConditionedError, InputError
from scsfri.numerics import (
    ComplexMatrix,
    RealVector,
    as_complex_matrix,
    low_rank_approximation,
    polynomial_roots,
    tls_solve,
)
from scsfri.pilots import PilotLayout, pilot_grid

logger = logging.getLogger(__name__)

Method = Literal["prony", "esprit"]
METHODS: tuple[Method, ...] = ("prony", "esprit")

DEFAULT_CADZOW_ITERS = 3
CADZOW_TOLERANCE = 1e-8
ROOT_SEPARATION = 1e-9
VANDERMONDE_CONDITION_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class DataMatrix:
    blocks: ComplexMatrix  # (P, rows, L)

    @property
    def P(self) -> int:
        return int(self.blocks.shape[0])

    @property
    def rows(self) -> int:
        return int(self.blocks.shape[1])

    @property
    def L(self) -> int:
        return int(self.blocks.shape[2])

    @property
    def length(self) -> int:
        """Length Q of the coefficient sequence the blocks are built from."""
        return self.rows + self.L - 1

    def stacked(self) -> ComplexMatrix:
        return self.blocks.reshape(self.P * self.rows, self.L)

    def singular_values(self) -> RealVector:
        return np.linalg.svd(self.stacked(), compute_uv=False)

    def singular_value_ratio(self, K: int) -> float:
        s = self.singular_values()
        if K >= s.size:
            return 0.0
        return float(s[K] / s[K - 1]) if s[K - 1] > 0 else 0.0

    def coefficients(self) -> ComplexMatrix:
        """Q×P coefficients read back by averaging each block's diagonals."""
        out = np.empty((self.length, self.P), dtype=np.complex128)
        for i in range(self.length):
            out[i] = np.diagonal(self.blocks, offset=self.L - 1 - i, axis1=1, axis2=2).mean(axis=1)
        return out


@dataclass(frozen=True)
class SupportEstimate:
    toas: RealVector
    tau: float
    filter: ComplexMatrix | None = field(default=None, repr=False)
    singular_values: RealVector | None = field(default=None, repr=False)
    warnings: tuple[str, ...] = ()

    @property
    def K(self) -> int:
        return int(self.toas.size)

    def scaled(self, dilation: int) -> SupportEstimate:
        """Support of the undilated channel: ToAs divided by the pilot gap."""
        return SupportEstimate(
            toas=self.toas / dilation,
            tau=self.tau,
            filter=self.filter,
            singular_values=self.singular_values,
            warnings=self.warnings,
        )


@dataclass(frozen=True, eq=False)
class ChannelEstimate:
    supports: tuple[SupportEstimate, ...]
    amplitudes: ComplexMatrix  # K×P
    grid: RealVector
    dilation: int

    @property
    def support(self) -> SupportEstimate:
        """Shared support; per-antenna estimates expose the first antenna's."""
        return self.supports[0]

    @property
    def toas(self) -> npt.NDArray[np.float64]:
        """K×P ToAs, identical columns when the support is shared."""
        if len(self.supports) == 1:
            return np.repeat(self.support.toas[:, np.newaxis], self.amplitudes.shape[1], axis=1)
        return np.stack([s.toas for s in self.supports], axis=1)

    @property
    def warnings(self) -> tuple[str, ...]:
        return tuple(w for s in self.supports for w in s.warnings)

    def frequency_response(self, indices: npt.ArrayLike) -> ComplexMatrix:
        """Σ_k ĉ_{k,p} W^{m t̂_{k,p}} on carriers m, one column per antenna."""
        carriers = np.asarray(indices, dtype=np.float64)
        phases = np.exp(-2j * np.pi * np.multiply.outer(carriers, self.toas) / self.support.tau)
        return np.einsum("mkp,kp->mp", phases, self.amplitudes)


def centred_grid(length: int) -> RealVector:
    return np.arange(length) - (length - 1) / 2.0


def build_data_matrix(coeffs: npt.ArrayLike, L: int, K: int | None = None) -> DataMatrix:
    y = as_complex_matrix(coeffs, "coeffs")
    length = y.shape[0]
    lower, upper = (1, length) if K is None else (K, length + 1 - K)
    if not lower <= L <= upper:
        raise InputError(f"L must be in [{lower}, {upper}], got {L}")

    blocks = np.stack([linalg.toeplitz(y[L - 1 :, p], y[L - 1 :: -1, p]) for p in range(y.shape[1])])
    return DataMatrix(blocks=blocks)


def _toas_from_roots(roots: npt.NDArray[np.complex128], tau: float) -> RealVector:
    toas = np.mod(-np.angle(roots) * tau / (2 * np.pi), tau)
    return np.sort(np.where(toas >= tau, toas - tau, toas))


def _close_root_warnings(toas: RealVector, tau: float) -> tuple[str, ...]:
    if toas.size < 2:
        return ()
    gaps = np.diff(np.concatenate([toas, [toas[0] + tau]]))
    if np.min(gaps) * 2 * np.pi / tau < ROOT_SEPARATION:
        logger.warning("degenerate support estimate: roots coincide in angle")
        return ("degenerate-roots",)
    return ()


def block_prony_tls(H: DataMatrix, K: int, tau: float) -> SupportEstimate:
    """Annihilating-filter support from the least right singular vector of H^{(K+1)}."""
    if K < 1 or H.L != K + 1:
        raise InputError(f"Prony needs a data matrix with L = K+1 = {K + 1}, got L = {H.L}")
    stacked = H.stacked()
    if stacked.shape[0] < K:
        raise InputError("data matrix has too few rows for the model order")

    _, s, vh = np.linalg.svd(stacked, full_matrices=True)
    annihilator = vh[-1].conj()
    roots = polynomial_roots(annihilator)
    if roots.size < K:
        raise DegenerateGeometryError(f"annihilating filter has {roots.size} roots, expected {K}")
    if roots.size > K:
        roots = roots[np.argsort(np.abs(np.abs(roots) - 1.0))[:K]]

    toas = _toas_from_roots(roots, tau)
    return SupportEstimate(
        toas=toas,
        tau=tau,
        filter=annihilator,
        singular_values=s,
        warnings=_close_root_warnings(toas, tau),
    )


def block_esprit_tls(H: DataMatrix, K: int, tau: float) -> SupportEstimate:
    """Support from the rotation between the shifted right signal subspaces."""
    if K < 1 or K > H.L - 1:
        raise InputError(f"ESPRIT needs 1 <= K <= L-1 = {H.L - 1}, got K = {K}")

    _, s, vh = np.linalg.svd(H.stacked(), full_matrices=False)
    signal = vh[:K].conj().T
    rotation = tls_solve(signal[:-1], signal[1:])
    toas = _toas_from_roots(np.linalg.eigvals(rotation), tau)
    return SupportEstimate(toas=toas, tau=tau, singular_values=s, warnings=_close_root_warnings(toas, tau))


def block_cadzow(
    H: DataMatrix, K: int, max_iters: int = DEFAULT_CADZOW_ITERS, tol: float = CADZOW_TOLERANCE
) -> DataMatrix:
    """Alternate rank-K truncation of the stacked matrix and Toeplitz averaging per block."""
    if K < 1 or K >= min(H.rows, H.L):
        raise InputError(f"K must be in [1, {min(H.rows, H.L) - 1}] for this data matrix")
    if max_iters < 0:
        raise InputError("max_iters must be >= 0")

    current = H
    for iteration in range(max_iters):
        ratio = current.singular_value_ratio(K)
        logger.debug("cadzow iteration %d: sigma_{K+1}/sigma_K = %.3e", iteration, ratio)
        if ratio < tol:
            break
        low_rank = low_rank_approximation(current.stacked(), K).reshape(current.blocks.shape)
        current = build_data_matrix(DataMatrix(blocks=low_rank).coefficients(), current.L)
    return current


def vandermonde(toas: npt.ArrayLike, grid: npt.ArrayLike, dilation: int, tau: float) -> ComplexMatrix:
    positions = np.asarray(grid, dtype=np.float64) * dilation
    return np.exp(-2j * np.pi * np.outer(positions, np.asarray(toas, dtype=np.float64)) / tau)


def estimate_amplitudes(
    support: SupportEstimate,
    coeffs: npt.ArrayLike,
    D: int = 1,
    grid: npt.ArrayLike | None = None,
) -> ComplexMatrix:
    """Least-squares gains c_{k,p} given the (undilated) support."""
    y = as_complex_matrix(coeffs, "coeffs")
    positions = centred_grid(y.shape[0]) if grid is None else np.asarray(grid, dtype=np.float64)
    if positions.shape != (y.shape[0],):
        raise InputError("grid must have one position per coefficient row")

    system = vandermonde(support.toas, positions, D, support.tau)
    condition = np.linalg.cond(system)
    if not condition <= VANDERMONDE_CONDITION_LIMIT:
        raise IllConditionedError(f"Vandermonde system condition number {condition:.3e}")
    amplitudes, *_ = linalg.lstsq(system, y)
    return amplitudes


def _support(coeffs: ComplexMatrix, K: int, method: Method, width: int, tau: float) -> SupportEstimate:
    if method == "prony":
        return block_prony_tls(build_data_matrix(coeffs, K + 1, K), K, tau)
    if method == "esprit":
        return block_esprit_tls(build_data_matrix(coeffs, width, K), K, tau)
    raise InputError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")


def denoised_coefficients(coeffs: ComplexMatrix, K: int, cadzow_iters: int, width: int) -> ComplexMatrix:
    if cadzow_iters == 0:
        return coeffs
    return block_cadzow(build_data_matrix(coeffs, width, K), K, cadzow_iters).coefficients()


def scs_fri(
    coeffs: npt.ArrayLike,
    K: int,
    method: Method = "esprit",
    cadzow_iters: int = DEFAULT_CADZOW_ITERS,
    D: int = 1,
    tau: float = 1.0,
    *,
    grid: npt.ArrayLike | None = None,
    L: int | None = None,
) -> ChannelEstimate:
    """Joint support and per-antenna gains from pilot coefficients of P antennas.

    Optional Cadzow denoising runs on H^{(L)} (default L = Q // 2, i.e. M for
    symmetric layouts). Prony rebuilds H^{(K+1)} from the denoised sequence.
    Estimated ToAs are divided by the pilot gap ``D``; gains come from the
    denoised coefficients.
    """
    y = as_complex_matrix(coeffs, "coeffs")
    if K < 1:
        raise InputError("K must be >= 1")
    if D < 1:
        raise InputError("D must be >= 1")
    positions = centred_grid(y.shape[0]) if grid is None else np.asarray(grid, dtype=np.float64)
    width = y.shape[0] // 2 if L is None else L

    cleaned = denoised_coefficients(y, K, cadzow_iters, width)
    support = _support(cleaned, K, method, width, tau).scaled(D)
    amplitudes = estimate_amplitudes(support, cleaned, D, positions)

    return ChannelEstimate(
        supports=(support,),
        amplitudes=amplitudes,
        grid=positions,
        dilation=D,
    )


def independent_fri(
    coeffs: npt.ArrayLike,
    K: int,
    method: Method = "esprit",
    cadzow_iters: int = DEFAULT_CADZOW_ITERS,
    D: int = 1,
    tau: float = 1.0,
    *,
    grid: npt.ArrayLike | None = None,
    L: int | None = None,
) -> ChannelEstimate:
    """Single-antenna FRI run separately on every antenna."""
    y = as_complex_matrix(coeffs, "coeffs")
    estimates = [
        scs_fri(y[:, [p]], K, method, cadzow_iters, D, tau, grid=grid, L=L) for p in range(y.shape[1])
    ]
    return ChannelEstimate(
        supports=tuple(e.support for e in estimates),
        amplitudes=np.hstack([e.amplitudes for e in estimates]),
        grid=estimates[0].grid,
        dilation=D,
    )


def lowpass_interpolate(
    coeffs: npt.ArrayLike,
    layout: PilotLayout,
    kernel: KernelConfig,
    *,
    grid: npt.ArrayLike | None = None,
    indices: npt.ArrayLike | None = None,
) -> ComplexMatrix:
    """Ideal lowpass interpolation of pilot coefficients to every carrier.

    The Q pilot samples are inverse-transformed to Q taps spanning the delay
    window τ/D, then evaluated on carriers ``indices`` (default -M..M of the
    kernel). Each carrier's interpolation weights have unit norm, so white
    pilot noise of variance σ² stays σ² on every carrier.
    """
    y = as_complex_matrix(coeffs, "coeffs")
    positions = pilot_grid(layout) if grid is None else np.asarray(grid, dtype=np.float64)
    if positions.shape != (y.shape[0],):
        raise InputError("grid must have one position per coefficient row")
    carriers = (
        np.arange(-kernel.M, kernel.M + 1) if indices is None else np.asarray(indices, dtype=np.float64)
    )

    count = positions.size
    taps = np.arange(count)
    to_taps = np.exp(2j * np.pi * np.outer(taps, positions) / count) / count
    to_carriers = np.exp(-2j * np.pi * np.outer(carriers, taps) / (layout.D * count))
    return to_carriers @ (to_taps @ y)
