from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
from scipy import integrate, optimize, special, stats

from scsfri.errors import CorrelationModelError, InputError
from scsfri.numerics import ComplexMatrix, bessel_i_ratio, bessel_j, cholesky

logger = logging.getLogger(__name__)

MAX_SERIES_TERMS = 60
SERIES_TOLERANCE = 1e-12
# |sin(πt/τ)| below which the kernel is evaluated from its cosine series.
SINGULAR_BAND = 1e-3
DUPLICATE_TOA_TOLERANCE = 1e-12

Seed = int | np.random.Generator


@dataclass(frozen=True)
class KernelConfig:
    tau: float
    M: int
    N: int

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise InputError("tau must be > 0")
        if self.M < 1:
            raise InputError("M must be >= 1")
        if self.N < 2 * self.M + 1:
            raise InputError("N must be >= 2M+1")

    @classmethod
    def from_sampling(cls, sampling_step: float, N: int, M: int) -> KernelConfig:
        return cls(tau=sampling_step * N, M=M, N=N)

    @property
    def bandwidth(self) -> float:
        return (2 * self.M + 1) / self.tau

    @property
    def sampling_step(self) -> float:
        return self.tau / self.N

    @property
    def flat_gain(self) -> float:
        return 1.0 / (2 * self.M + 1)

    def sample_times(self) -> npt.NDArray[np.float64]:
        return np.arange(self.N) * self.sampling_step


@dataclass(frozen=True)
class PathSpec:
    toa: float
    expected_amplitude: float
    scatterer: int | None = None

    def __post_init__(self) -> None:
        if self.expected_amplitude < 0:
            raise InputError("expected_amplitude must be >= 0")


@dataclass(frozen=True)
class Scatterer:
    azimuth: float
    kappa: float
    toa: float
    amplitude: float

    def __post_init__(self) -> None:
        if self.kappa < 0:
            raise InputError("kappa must be >= 0")


@dataclass(frozen=True)
class ScattererScene:
    carrier_omega: float
    wave_speed: float
    antennas: tuple[tuple[float, float], ...]
    scatterers: tuple[Scatterer, ...] = ()

    def __post_init__(self) -> None:
        if len(self.antennas) < 1:
            raise InputError("a scene needs at least one antenna")

    @classmethod
    def ring(
        cls,
        count: int,
        radius: float,
        *,
        carrier_frequency: float,
        wave_speed: float,
        scatterers: Sequence[Scatterer] = (),
    ) -> ScattererScene:
        angles = 2 * np.pi * np.arange(count) / count
        antennas = tuple((radius * math.cos(a), radius * math.sin(a)) for a in angles)
        return cls(
            carrier_omega=2 * np.pi * carrier_frequency,
            wave_speed=wave_speed,
            antennas=antennas,
            scatterers=tuple(scatterers),
        )

    @property
    def antenna_count(self) -> int:
        return len(self.antennas)

    def antenna_distance(self, m: int, n: int) -> float:
        (xm, ym), (xn, yn) = self.antennas[m], self.antennas[n]
        return math.hypot(xn - xm, yn - ym)

    def pair_normal_azimuth(self, m: int, n: int) -> float:
        """Azimuth of the counter-clockwise normal to the segment m -> n."""
        (xm, ym), (xn, yn) = self.antennas[m], self.antennas[n]
        dx, dy = xn - xm, yn - ym
        if dx == 0 and dy == 0:
            return 0.0
        return math.atan2(dx, -dy)

    def paths(self) -> list[PathSpec]:
        return [
            PathSpec(toa=s.toa, expected_amplitude=s.amplitude, scatterer=index)
            for index, s in enumerate(self.scatterers)
        ]

    def rotated(self, angle: float) -> ScattererScene:
        c, s = math.cos(angle), math.sin(angle)
        antennas = tuple((c * x - s * y, s * x + c * y) for x, y in self.antennas)
        scatterers = tuple(
            Scatterer(azimuth=sc.azimuth + angle, kappa=sc.kappa, toa=sc.toa, amplitude=sc.amplitude)
            for sc in self.scatterers
        )
        return ScattererScene(self.carrier_omega, self.wave_speed, antennas, scatterers)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    kernel: KernelConfig
    nominal_toas: npt.NDArray[np.float64]
    toas: npt.NDArray[np.float64]
    gains: ComplexMatrix
    epsilon: float = 0.0
    seed: int | None = None
    fading: ComplexMatrix | None = field(default=None, repr=False)

    @property
    def K(self) -> int:
        return int(self.gains.shape[0])

    @property
    def P(self) -> int:
        return int(self.gains.shape[1])


def _periodic_input(t: float | npt.ArrayLike) -> tuple[npt.NDArray[np.float64], bool]:
    values = np.asarray(t, dtype=np.float64)
    return np.atleast_1d(values).copy(), values.ndim == 0


def dirichlet_kernel(t: float | npt.ArrayLike, cfg: KernelConfig) -> float | npt.NDArray[np.float64]:
    """τ-periodic sinc ``sin(πBt) / (Bτ sin(πt/τ))``."""
    values, scalar = _periodic_input(t)
    n = 2 * cfg.M + 1
    x = np.pi * values / cfg.tau
    s = np.sin(x)
    near = np.abs(s) < SINGULAR_BAND

    out = np.empty_like(x)
    regular = ~near
    out[regular] = np.sin(n * x[regular]) / (n * s[regular])
    if np.any(near):
        m = np.arange(1, cfg.M + 1)
        out[near] = (1.0 + 2.0 * np.cos(2.0 * np.multiply.outer(x[near], m)).sum(axis=-1)) / n
    return float(out[0]) if scalar else out


def dirichlet_derivative(t: float | npt.ArrayLike, cfg: KernelConfig) -> float | npt.NDArray[np.float64]:
    """Time derivative of the Dirichlet kernel in 1/seconds; zero at t ≡ 0 mod τ."""
    values, scalar = _periodic_input(t)
    n = 2 * cfg.M + 1
    x = np.pi * values / cfg.tau
    s = np.sin(x)
    near = np.abs(s) < SINGULAR_BAND

    dx = np.empty_like(x)
    regular = ~near
    xr, sr = x[regular], s[regular]
    dx[regular] = (n * np.cos(n * xr) * sr - np.sin(n * xr) * np.cos(xr)) / (n * sr**2)
    if np.any(near):
        m = np.arange(1, cfg.M + 1)
        dx[near] = -4.0 * (m * np.sin(2.0 * np.multiply.outer(x[near], m))).sum(axis=-1) / n
    out = dx * (np.pi / cfg.tau)
    return float(out[0]) if scalar else out


def kappa_from_geometry(distance: float, width: float) -> float:
    """Von-Mises scale κ solving ``(1 - exp(-3κ/4)) κ = (distance / width)²``."""
    if not distance > 0 or not width > 0:
        raise InputError("distance and width must be > 0")
    target = (distance / width) ** 2

    def excess(kappa: float) -> float:
        return -math.expm1(-0.75 * kappa) * kappa - target

    upper = 1.0
    while excess(upper) < 0:
        upper *= 2.0
    return float(optimize.bisect(excess, 0.0, upper, xtol=1e-300, rtol=1e-12, maxiter=4000))


def azimuthal_density(theta: float | npt.ArrayLike, kappa_prime: float) -> float | npt.NDArray[np.float64]:
    if kappa_prime < 0:
        raise InputError("kappa_prime must be >= 0")
    values, scalar = _periodic_input(theta)
    root = math.sqrt(kappa_prime)
    along = root * np.cos(values)
    radial = along * stats.norm.cdf(along) + stats.norm.pdf(along)
    # Back lobe: a·F(a) + f(a) = f(a)·(1 + a·√(π/2)·erfcx(-a/√2)).
    back = along < 0
    a = along[back]
    radial[back] = stats.norm.pdf(a) * (1.0 + a * math.sqrt(np.pi / 2) * special.erfcx(-a / math.sqrt(2.0)))
    density = stats.norm.pdf(root * np.sin(values)) * radial
    return float(density[0]) if scalar else density


def von_mises_pdf(theta: float | npt.ArrayLike, kappa: float) -> float | npt.NDArray[np.float64]:
    if kappa < 0:
        raise InputError("kappa must be >= 0")
    values, scalar = _periodic_input(theta)
    # Scaled Bessel keeps large κ finite.
    density = np.exp(kappa * (np.cos(values) - 1.0)) / (2 * np.pi * special.ive(0, kappa))
    return float(density[0]) if scalar else density


def von_mises_fit_divergence(kappa_prime: float) -> float:
    """KL(q ‖ p) in bits of the matched Von-Mises q against the azimuthal density p.

    q uses the κ solving ``(1 - exp(-3κ/4)) κ = κ'``.
    """
    if not kappa_prime > 0:
        raise InputError("kappa_prime must be > 0")
    kappa = kappa_from_geometry(math.sqrt(kappa_prime), 1.0)

    def integrand(v: float) -> float:
        q = von_mises_pdf(v, kappa)
        return q * math.log(q / azimuthal_density(v, kappa_prime)) if q > 0 else 0.0

    value, _ = integrate.quad(integrand, -np.pi, np.pi, points=(0.0,), limit=400, epsabs=1e-12)
    return value / math.log(2.0)


def _series_terms(
    scene: ScattererScene, k: int, m: int, n: int, ratios: npt.NDArray[np.float64], terms: int | None
) -> complex:
    x = scene.carrier_omega * scene.antenna_distance(m, n) / scene.wave_speed
    phase = -scene.pair_normal_azimuth(m, n) + scene.scatterers[k].azimuth - np.pi / 2

    orders = np.arange(1, ratios.size + 1)
    magnitudes = 2.0 * ratios * np.asarray(bessel_j(orders, x))
    if terms is None:
        small = (np.abs(magnitudes) < SERIES_TOLERANCE) & ((orders > x) | (ratios < SERIES_TOLERANCE))
        count = int(np.argmax(small)) + 1 if np.any(small) else ratios.size
        logger.debug("correlation series for path %d, pair (%d, %d): %d terms", k, m, n, count)
    else:
        count = min(terms, ratios.size)

    l = orders[:count]
    series = np.sum((1j**l) * magnitudes[:count] * np.cos(l * phase))
    return complex(bessel_j(0, x) + series)


def spatial_correlation(
    scene: ScattererScene, k: int, m: int, n: int, terms: int | None = None
) -> complex:
    """Correlation E[Z_{k,m} Z_{k,n}^*] of path k between antennas m and n.

    Truncated Jacobi-Anger series. ``terms=None`` stops at the first term whose
    magnitude falls below 1e-12 (at most 60 terms).
    """
    if terms is not None and terms < 1:
        raise InputError("terms must be >= 1")
    kappa = scene.scatterers[k].kappa
    orders = np.arange(1, MAX_SERIES_TERMS + 1)
    ratios = np.asarray(bessel_i_ratio(orders, kappa)) if kappa > 0 else np.zeros(orders.size)
    return _series_terms(scene, k, m, n, ratios, terms)


def spatial_correlation_gaussian(
    scene: ScattererScene, k: int, m: int, n: int, terms: int = MAX_SERIES_TERMS
) -> complex:
    """Large-κ form of the series with I_l/I_0 replaced by exp(-l²/2κ)."""
    kappa = scene.scatterers[k].kappa
    orders = np.arange(1, MAX_SERIES_TERMS + 1)
    ratios = np.exp(-(orders**2) / (2.0 * kappa)) if kappa > 0 else np.zeros(orders.size)
    return _series_terms(scene, k, m, n, ratios, terms)


def spatial_correlation_quadrature(scene: ScattererScene, k: int, m: int, n: int) -> complex:
    scatterer = scene.scatterers[k]
    x = scene.carrier_omega * scene.antenna_distance(m, n) / scene.wave_speed
    offset = scene.pair_normal_azimuth(m, n) - scatterer.azimuth

    def weight(v: float) -> float:
        return von_mises_pdf(v + offset, scatterer.kappa)

    peak = float(np.angle(np.exp(-1j * offset)))
    points = (peak,) if abs(peak) < np.pi else None
    options = {"limit": 400, "epsabs": 1e-13, "epsrel": 1e-12}
    real, _ = integrate.quad(lambda v: weight(v) * math.cos(x * math.sin(v)), -np.pi, np.pi, points=points, **options)
    imag, _ = integrate.quad(lambda v: weight(v) * math.sin(x * math.sin(v)), -np.pi, np.pi, points=points, **options)
    return complex(real, imag)


def build_correlation_matrix(scene: ScattererScene, k: int) -> ComplexMatrix:
    size = scene.antenna_count
    matrix = np.eye(size, dtype=np.complex128)
    for m in range(size):
        for n in range(m + 1, size):
            value = spatial_correlation(scene, k, m, n)
            matrix[m, n] = value
            matrix[n, m] = np.conj(value)

    eigenvalues, vectors = np.linalg.eigh(matrix)
    if eigenvalues[0] < -1e-10:
        raise CorrelationModelError(
            f"correlation matrix of path {k} has eigenvalue {eigenvalues[0]:.3e}; series too short"
        )
    if eigenvalues[0] < 0:
        matrix = (vectors * np.clip(eigenvalues, 0.0, None)) @ vectors.conj().T
    return matrix


def fading_factors(
    paths: Sequence[PathSpec], antennas: int, scene: ScattererScene | None = None
) -> list[ComplexMatrix]:
    factors: list[ComplexMatrix] = []
    for path in paths:
        if scene is not None and path.scatterer is not None:
            factors.append(cholesky(build_correlation_matrix(scene, path.scatterer)))
        else:
            factors.append(np.eye(antennas, dtype=np.complex128))
    return factors


def standard_complex_normal(rng: np.random.Generator, shape: tuple[int, ...]) -> ComplexMatrix:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def draw_fading(factors: Sequence[ComplexMatrix], rng: np.random.Generator) -> ComplexMatrix:
    """K×P unit-variance fading coefficients Z_k = L_k r."""
    antennas = factors[0].shape[0]
    r = standard_complex_normal(rng, (len(factors), antennas))
    return np.stack([factor @ r[k] for k, factor in enumerate(factors)])


def _check_distinct_toas(paths: Sequence[PathSpec], tau: float) -> None:
    toas = sorted(p.toa for p in paths)
    for path in paths:
        if not 0 <= path.toa < tau:
            raise InputError(f"path ToA {path.toa} outside [0, tau)")
    for a, b in zip(toas, toas[1:]):
        if b - a < DUPLICATE_TOA_TOLERANCE * tau:
            raise InputError("duplicate ToAs")
    if len(toas) > 1 and toas[0] + tau - toas[-1] < DUPLICATE_TOA_TOLERANCE * tau:
        raise InputError("duplicate ToAs")


def sample_channel(
    kernel: KernelConfig,
    paths: Sequence[PathSpec],
    *,
    scene: ScattererScene | None = None,
    antennas: int | None = None,
    epsilon: float = 0.0,
    seed: Seed = 0,
) -> ChannelRealization:
    if not paths:
        raise InputError("at least one path is required")
    _check_distinct_toas(paths, kernel.tau)
    if epsilon < 0:
        raise InputError("epsilon must be >= 0")

    count = scene.antenna_count if scene is not None else antennas
    if count is None or count < 1:
        raise InputError("number of antennas must be given when no scene is used")

    rng = np.random.default_rng(seed)
    fading = draw_fading(fading_factors(paths, count, scene), rng)
    amplitudes = np.array([p.expected_amplitude for p in paths])
    nominal = np.array([p.toa for p in paths])
    jitter = rng.uniform(-epsilon, epsilon, size=fading.shape) if epsilon > 0 else np.zeros(fading.shape)

    return ChannelRealization(
        kernel=kernel,
        nominal_toas=nominal,
        toas=nominal[:, np.newaxis] + jitter,
        gains=amplitudes[:, np.newaxis] * fading,
        epsilon=epsilon,
        seed=seed if isinstance(seed, int) else None,
        fading=fading,
    )


def channel_impulse_samples(real: ChannelRealization) -> ComplexMatrix:
    """Noiseless N×P samples Σ_k c_{k,p} φ(nT - t_{k,p})."""
    times = real.kernel.sample_times()
    shaped = dirichlet_kernel(times[:, np.newaxis, np.newaxis] - real.toas[np.newaxis], real.kernel)
    return np.einsum("nkp,kp->np", shaped, real.gains)


def sample_received(
    real: ChannelRealization,
    sigma2: float,
    seed: Seed = 0,
    waveform: npt.ArrayLike | None = None,
) -> ComplexMatrix:
    """Adds circular complex AWGN of variance sigma2; ``waveform`` is circularly convolved first."""
    if sigma2 < 0:
        raise InputError("sigma2 must be >= 0")
    samples = channel_impulse_samples(real)
    if waveform is not None:
        frame = np.asarray(waveform, dtype=np.complex128)
        if frame.shape != (real.kernel.N,):
            raise InputError(f"waveform must have length {real.kernel.N}")
        samples = np.fft.ifft(np.fft.fft(frame)[:, np.newaxis] * np.fft.fft(samples, axis=0), axis=0)

    if sigma2 > 0:
        rng = np.random.default_rng(seed)
        samples = samples + math.sqrt(sigma2) * standard_complex_normal(rng, samples.shape)
    return samples


def frequency_response(real: ChannelRealization, indices: npt.ArrayLike) -> ComplexMatrix:
    """Σ_k c_{k,p} W^{m t_{k,p}} for the given carrier indices m (rows) and antennas."""
    carriers = np.asarray(indices, dtype=np.float64)
    phases = np.exp(-2j * np.pi * np.multiply.outer(carriers, real.toas) / real.kernel.tau)
    return np.einsum("mkp,kp->mp", phases, real.gains)


def channel_dft_model(real: ChannelRealization) -> ComplexMatrix:
    m = np.arange(-real.kernel.M, real.kernel.M + 1)
    return real.kernel.flat_gain * frequency_response(real, m)


def noise_variance(amplitudes: Sequence[float], kernel: KernelConfig, snr_db: float) -> float:
    """sigma2 with Σ a_k² / ((2M+1)·sigma2) equal to the requested SNR."""
    power = math.fsum(a * a for a in amplitudes) * kernel.flat_gain
    return power / 10.0 ** (snr_db / 10.0)
