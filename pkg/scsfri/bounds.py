"""Cramér-Rao bounds for ToA and gain estimation.

ToA bounds are on the normalized time t/τ, so kernel derivatives enter as
τ·dφ/dt. Measurements are complex baseband with noise variance σ² per sample
unless a ``complex_valued=False`` variant is requested.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np
import numpy.typing as npt
from scipy import integrate, linalg

from scsfri.channel import (
    KernelConfig,
    PathSpec,
    ScattererScene,
    dirichlet_derivative,
    dirichlet_kernel,
    draw_fading,
    fading_factors,
)
from scsfri.errors import BoundDivergenceError, DegenerateGeometryError, InputError
from scsfri.numerics import ComplexMatrix, RealVector, as_complex_matrix, cholesky
from scsfri.trials import map_trials, stable_mean, standard_error, trial_rng

logger = logging.getLogger(__name__)

Regime = Literal["deterministic", "rayleigh-separable", "rayleigh-full", "conditional"]

EIGENVALUE_GAP = 1e-6
ZERO_EIGENVALUE = 1e-12
FALLBACK_DRAWS = 200_000
MIN_FISHER_TRIALS = 100
PINV_RTOL = 1e-12
FISHER_CONDITION_LIMIT = 1e12
SKIP_WARNING_FRACTION = 0.01


@dataclass(frozen=True)
class CrbReport:
    toa: tuple[float, ...]
    amplitude: tuple[float, ...]
    regime: Regime
    monte_carlo_trials: int = 0
    toa_stderr: tuple[float, ...] = ()
    amplitude_stderr: tuple[float, ...] = ()
    skipped: int = 0
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for value in (*self.toa, *self.amplitude):
            if not (math.isfinite(value) and value >= 0):
                raise InputError(f"bounds must be finite and >= 0, got {value}")
        if self.monte_carlo_trials > 0 and len(self.toa_stderr) != len(self.toa):
            raise InputError("Monte-Carlo reports need a standard error per bound")

    @property
    def toa_rmse(self) -> tuple[float, ...]:
        return tuple(math.sqrt(v) for v in self.toa)


@dataclass(frozen=True)
class PilotDomain:
    """Pilot coefficients viewed as samples of a (2M'+1)-point channel at ToAs D·t."""

    kernel: KernelConfig
    sigma2: float
    dilation: int


def pilot_domain(kernel: KernelConfig, pilots_M: int, D: int, sigma2: float) -> PilotDomain:
    # Extracted pilot coefficients carry noise (2M+1)²σ²/N each.
    coefficient_noise = (2 * kernel.M + 1) ** 2 * sigma2 / kernel.N
    count = 2 * pilots_M + 1
    return PilotDomain(
        kernel=KernelConfig(tau=kernel.tau, M=pilots_M, N=count),
        sigma2=coefficient_noise / count,
        dilation=D,
    )


def crb_single_dirac(M: int, N: int, psnr: float) -> tuple[float, float]:
    """Deterministic single-path bounds on (Δt/τ)² and (Δc/c)² for a real-valued channel."""
    if not psnr > 0:
        raise InputError("psnr must be > 0")
    if M < 1 or N < 2 * M + 1:
        raise InputError("need M >= 1 and N >= 2M+1")
    toa = 3 * (2 * M + 1) / (4 * math.pi**2 * N * M * (M + 1)) / psnr
    amplitude = (2 * M + 1) / N / psnr
    return toa, amplitude


def _normalized_derivative(t: npt.ArrayLike, kernel: KernelConfig) -> npt.NDArray[np.float64]:
    return kernel.tau * np.asarray(dirichlet_derivative(t, kernel))


def dsnr(a1: float, t1: float, sigma2: float, kernel: KernelConfig) -> float:
    """|a|²·Σ_n |τφ'(nT - t)|² / (Nσ²)."""
    if not sigma2 > 0:
        raise InputError("sigma2 must be > 0")
    derivative = _normalized_derivative(kernel.sample_times() - t1, kernel)
    return abs(a1) ** 2 * math.fsum(derivative**2) / (kernel.N * sigma2)


def expected_inverse_quadratic_integral(eigenvalues: npt.ArrayLike) -> float:
    """E[(Z*Z)^-1] as ∫_0^∞ Π_p (1 + λ_p s)^-1 ds."""
    lam = np.asarray(eigenvalues, dtype=np.float64)
    value, _ = integrate.quad(lambda s: float(np.prod(1.0 / (1.0 + lam * s))), 0.0, np.inf, limit=400)
    return float(value)


def _expected_inverse_monte_carlo(lam: RealVector, draws: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    energy = rng.standard_exponential((draws, lam.size)) @ lam
    return float(np.mean(1.0 / energy))


def expected_inverse_quadratic(
    eigenvalues: npt.ArrayLike, *, draws: int = FALLBACK_DRAWS, seed: int = 0
) -> float:
    """E[(Z*Z)^-1] for Z ~ CN(0, R) given the eigenvalues of R.

    Equal eigenvalues λ give 1/((P-1)λ). Distinct ones use the partial-fraction
    closed form. Spectra with a relative gap below 1e-6 fall back to Monte-Carlo.
    Zero eigenvalues drop out of Z*Z.
    """
    lam = np.sort(np.asarray(eigenvalues, dtype=np.float64).ravel())
    if lam.size == 0 or np.any(~np.isfinite(lam)) or np.any(lam < -ZERO_EIGENVALUE * max(lam[-1], 1.0)):
        raise InputError("eigenvalues must be finite and >= 0")
    lam = lam[lam > ZERO_EIGENVALUE * lam[-1]]
    count = lam.size
    if count < 2:
        raise BoundDivergenceError("E[(Z*Z)^-1] diverges with fewer than two effective antennas")

    scale = lam[-1]
    if (lam[-1] - lam[0]) < EIGENVALUE_GAP * scale:
        return 1.0 / ((count - 1) * float(np.mean(lam)))

    if np.min(np.diff(lam)) < EIGENVALUE_GAP * scale:
        logger.debug("clustered eigenvalues, Monte-Carlo fallback with %d draws", draws)
        return _expected_inverse_monte_carlo(lam, draws, seed)

    # Evaluate on λ/λ_max for range, then rescale.
    mu = lam / scale
    terms = []
    for p in range(count):
        others = np.delete(mu, p)
        terms.append(mu[p] ** (count - 2) * math.log(mu[p]) / float(np.prod(mu[p] - others)))
    return math.fsum(terms) / scale


def crb_rayleigh_single_path(R1: npt.ArrayLike, dsnr_value: float, N: int) -> float:
    """Expected single-path ToA bound E[(Z*Z)^-1] / (2N·dSNR) under Rayleigh fading."""
    correlation = as_complex_matrix(R1, "R1")
    if correlation.shape[0] != correlation.shape[1]:
        raise InputError("R1 must be square")
    if not dsnr_value > 0:
        raise InputError("dsnr must be > 0")
    eigenvalues = np.linalg.eigvalsh(0.5 * (correlation + correlation.conj().T))
    return expected_inverse_quadratic(eigenvalues) / (2 * N * dsnr_value)


def effective_snr(gains: npt.ArrayLike, sigma2: float, *, complex_valued: bool = True) -> float:
    """Σ_ℓ |c_ℓ|² / σ² entering the ToA bound, doubled for complex samples of total variance σ²."""
    power = math.fsum(np.abs(np.asarray(gains).ravel()) ** 2)
    return (2.0 if complex_valued else 1.0) * power / sigma2


def peak_snr(gains: npt.ArrayLike, sigma2: float) -> npt.NDArray[np.float64]:
    """Per-antenna |c_ℓ|² / σ², the ratio entering the gain bound."""
    return np.abs(np.asarray(gains, dtype=np.complex128)) ** 2 / sigma2


def crb_scattered(
    M: int,
    D: int,
    BT_product: float,
    esnr_inv_mean: float,
    psnr_inv_means: Sequence[float],
    *,
    regime: Regime = "rayleigh-separable",
) -> CrbReport:
    """Scattered-pilot bounds: ToA gains a factor D⁻² over contiguous pilots."""
    if M < 1 or D < 1:
        raise InputError("M and D must be >= 1")
    if not (BT_product > 0 and esnr_inv_mean > 0) or any(not v > 0 for v in psnr_inv_means):
        raise InputError("BT and SNR moments must be > 0")
    toa = 3 * BT_product / (4 * D**2 * math.pi**2 * M * (M + 1)) * esnr_inv_mean
    amplitude = tuple(BT_product * v for v in psnr_inv_means)
    return CrbReport(toa=(toa,), amplitude=amplitude, regime=regime)


def crb_conditional_single_path(
    gains: npt.ArrayLike, toa: float, sigma2: float, kernel: KernelConfig
) -> float:
    """Separable ToA bound for one fixed draw of the path's antenna gains."""
    power = math.fsum(np.abs(np.asarray(gains).ravel()) ** 2)
    if not power > 0:
        raise BoundDivergenceError("conditional bound diverges for a zero gain")
    return 1.0 / (2 * kernel.N * dsnr(1.0, toa, sigma2, kernel) * power)


def _kernel_matrices(toas: RealVector, kernel: KernelConfig) -> tuple[RealVector, RealVector]:
    offsets = kernel.sample_times()[:, np.newaxis] - toas[np.newaxis, :]
    phi = np.asarray(dirichlet_kernel(offsets, kernel))
    phi_prime = _normalized_derivative(offsets, kernel)
    return phi, phi_prime


@dataclass(frozen=True, eq=False)
class _FisherGeometry:
    gram: RealVector  # Φ'ᵀ P⊥ Φ'
    pinv: RealVector  # Φ⁺
    phi_prime: RealVector
    amplitude_floor: RealVector  # diag((ΦᵀΦ)⁻¹)


def _fisher_geometry(toas: npt.ArrayLike, kernel: KernelConfig) -> _FisherGeometry:
    times = np.asarray(toas, dtype=np.float64).ravel()
    phi, phi_prime = _kernel_matrices(times, kernel)
    pinv = linalg.pinv(phi, rtol=PINV_RTOL)
    if np.linalg.matrix_rank(phi, tol=PINV_RTOL * np.linalg.norm(phi, 2)) < times.size:
        raise DegenerateGeometryError("kernel matrix is rank deficient (coincident paths)")
    residual = phi_prime - phi @ (pinv @ phi_prime)
    return _FisherGeometry(
        gram=phi_prime.T @ residual,
        pinv=pinv,
        phi_prime=phi_prime,
        amplitude_floor=np.diag(np.linalg.inv(phi.T @ phi)),
    )


def _gain_matrix(gains: ComplexMatrix) -> ComplexMatrix:
    return gains @ gains.conj().T


def fisher_matrix(
    toas: npt.ArrayLike,
    Z_amplitudes: npt.ArrayLike,
    a: npt.ArrayLike,
    sigma2: float,
    kernel: KernelConfig,
) -> ComplexMatrix:
    """K×K Fisher information of the normalized ToAs with the gains as nuisance.

    J = 2σ⁻² (Φ'ᵀ P⊥ Φ') ⊙ diag(a)(Σ_p Z_p Z_p*)diag(a*), P⊥ the projector onto
    the orthogonal complement of span Φ. Bounds come from inv(Re J).
    """
    if not sigma2 > 0:
        raise InputError("sigma2 must be > 0")
    geometry = _fisher_geometry(toas, kernel)
    fading = as_complex_matrix(Z_amplitudes, "Z_amplitudes")
    weights = np.asarray(a, dtype=np.complex128).ravel()
    if fading.shape[0] != weights.size or weights.size != geometry.gram.shape[0]:
        raise InputError("toas, Z_amplitudes rows and a must have the same length")
    gains = weights[:, np.newaxis] * fading
    return 2.0 / sigma2 * geometry.gram * _gain_matrix(gains)


def _trial_bounds(
    geometry: _FisherGeometry, gains: ComplexMatrix, sigma2: float
) -> tuple[RealVector, RealVector] | None:
    information = np.real(2.0 / sigma2 * geometry.gram * _gain_matrix(gains))
    if np.linalg.cond(information) > FISHER_CONDITION_LIMIT:
        return None
    toa_cov = np.linalg.inv(information)
    # Gain errors: LS noise on span Φ plus ToA errors leaking through Φ⁺Φ'.
    leak = geometry.pinv @ geometry.phi_prime
    spread = np.einsum("kj,jl,jp,lp,kl->kp", leak, toa_cov, gains, gains.conj(), leak, optimize=True)
    amplitude = sigma2 * geometry.amplitude_floor[:, np.newaxis] + np.real(spread)
    return np.diag(toa_cov), amplitude.mean(axis=1)


def _correlation_factors(correlations: Sequence[npt.ArrayLike], paths: int) -> list[ComplexMatrix]:
    matrices = [as_complex_matrix(r, "correlation") for r in correlations]
    if len(matrices) != paths:
        raise InputError(f"need one correlation matrix per path, got {len(matrices)} for {paths}")
    size = matrices[0].shape[0]
    if any(m.shape != (size, size) for m in matrices):
        raise InputError("correlation matrices must be square and of equal size")
    return [cholesky(m) for m in matrices]


def crb_monte_carlo(
    paths: Sequence[PathSpec],
    sigma2: float,
    kernel: KernelConfig,
    trials: int,
    seed: int = 0,
    *,
    scene: ScattererScene | None = None,
    correlations: Sequence[npt.ArrayLike] | None = None,
    antennas: int | None = None,
    threads: int = 1,
) -> CrbReport:
    """Fading-averaged diagonal of inv(Re J), reported with Monte-Carlo standard errors.

    Antenna correlation comes from ``scene`` or from one precomputed P×P
    matrix per path in ``correlations``; neither means uncorrelated antennas.
    Gain bounds are E|Δc_{k,p}|² / a_k², averaged over antennas.
    """
    if trials < MIN_FISHER_TRIALS:
        raise InputError(f"trials must be >= {MIN_FISHER_TRIALS}")
    if not sigma2 > 0:
        raise InputError("sigma2 must be > 0")
    if scene is not None and correlations is not None:
        raise InputError("give either a scene or correlation matrices, not both")

    amplitudes = np.array([p.expected_amplitude for p in paths])
    geometry = _fisher_geometry([p.toa for p in paths], kernel)
    if correlations is not None:
        factors = _correlation_factors(correlations, len(paths))
    else:
        count = scene.antenna_count if scene is not None else antennas
        if count is None or count < 1:
            raise InputError("number of antennas must be given when no scene is used")
        factors = fading_factors(paths, count, scene)

    def run(index: int) -> tuple[RealVector, RealVector] | None:
        fading = draw_fading(factors, trial_rng(seed, index))
        return _trial_bounds(geometry, amplitudes[:, np.newaxis] * fading, sigma2)

    results = [r for r in map_trials(run, trials, threads) if r is not None]
    skipped = trials - len(results)
    if not results:
        raise BoundDivergenceError("every Fisher draw was singular")

    toa = np.array([r[0] for r in results])
    gain = np.array([r[1] for r in results]) / amplitudes[np.newaxis, :] ** 2
    warnings: tuple[str, ...] = ()
    if skipped > SKIP_WARNING_FRACTION * trials:
        logger.warning("skipped %d of %d singular Fisher draws", skipped, trials)
        warnings = (f"skipped-{skipped}-singular-draws",)

    return CrbReport(
        toa=tuple(stable_mean(toa[:, k]) for k in range(toa.shape[1])),
        amplitude=tuple(stable_mean(gain[:, k]) for k in range(gain.shape[1])),
        regime="rayleigh-full",
        monte_carlo_trials=len(results),
        toa_stderr=tuple(standard_error(toa[:, k]) for k in range(toa.shape[1])),
        amplitude_stderr=tuple(standard_error(gain[:, k]) for k in range(gain.shape[1])),
        skipped=skipped,
        warnings=warnings,
    )
