from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy import optimize

from scsfri.bounds import (
    crb_conditional_single_path,
    crb_monte_carlo,
    crb_rayleigh_single_path,
    crb_scattered,
    dsnr,
    effective_snr,
    expected_inverse_quadratic,
    peak_snr,
    pilot_domain,
)
from scsfri.channel import (
    ChannelRealization,
    KernelConfig,
    PathSpec,
    noise_variance,
    sample_channel,
    sample_received,
)
from scsfri.errors import ConfigError, NumericalError
from scsfri.estimator import ChannelEstimate, independent_fri, lowpass_interpolate, scs_fri
from scsfri.models import ExperimentConfig
from scsfri.numerics import ComplexMatrix
from scsfri.pilots import (
    PilotLayout,
    dft_bin,
    extract_channel_dft,
    pilot_dft_indices,
    pilot_grid,
    sample_dft,
    wht_pilot_waveform,
)
from scsfri.results import ResultTable
from scsfri.trials import map_trials, stable_mean, trial_rng

logger = logging.getLogger(__name__)

EXPERIMENT_A, EXPERIMENT_B, EXPERIMENT_C, SIMULATION = 1, 2, 3, 4


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[int, int], ...]
    errors: npt.NDArray[np.float64]


@dataclass(frozen=True)
class TrialResult:
    true_toas: npt.NDArray[np.float64]
    estimated_toas: npt.NDArray[np.float64] | None
    squared_errors: npt.NDArray[np.float64] | None
    symbol_errors: int = 0
    symbols: int = 0


@dataclass(frozen=True)
class Simulation:
    realization: ChannelRealization
    sigma2: float
    samples: ComplexMatrix
    coefficients: ComplexMatrix
    grid: npt.NDArray[np.float64]


def circular_distance(a: npt.ArrayLike, b: npt.ArrayLike, period: float) -> npt.NDArray[np.float64]:
    diff = np.mod(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)), period)
    return np.minimum(diff, period - diff)


def match_toas(true_toas: npt.ArrayLike, estimated: npt.ArrayLike, tau: float) -> MatchResult:
    """Optimal pairing of estimates to true ToAs under circular distance.

    ``errors[k]`` is the distance of true ToA k to its matched estimate.
    """
    truth = np.asarray(true_toas, dtype=np.float64).ravel()
    guess = np.asarray(estimated, dtype=np.float64).ravel()
    if truth.size != guess.size:
        raise ConfigError("true and estimated ToA counts differ")
    cost = circular_distance(truth[:, np.newaxis], guess[np.newaxis, :], tau)
    rows, cols = optimize.linear_sum_assignment(cost)
    return MatchResult(
        pairs=tuple((int(r), int(c)) for r, c in zip(rows, cols)),
        errors=cost[rows, cols],
    )


def _frame(cfg: ExperimentConfig) -> tuple[KernelConfig, PilotLayout]:
    kernel = cfg.kernel.to_kernel()
    layout = cfg.pilots.to_layout()
    if layout.kind == "wht":
        raise ConfigError("experiments need a DFT pilot layout")
    return kernel, layout


def _estimate(
    cfg: ExperimentConfig,
    coeffs: ComplexMatrix,
    layout: PilotLayout,
    kernel: KernelConfig,
    K: int,
    method: str | None = None,
    cadzow_iters: int | None = None,
    *,
    rows: slice | None = None,
    estimator: Callable[..., ChannelEstimate] = scs_fri,
) -> ChannelEstimate:
    grid = pilot_grid(layout)
    if rows is not None:
        coeffs, grid = coeffs[rows], grid[rows]
    return estimator(
        coeffs,
        K,
        method or cfg.estimator.method,
        cfg.estimator.cadzow_iters if cadzow_iters is None else cadzow_iters,
        layout.D,
        kernel.tau,
        grid=grid,
        L=cfg.estimator.L,
    )


def _score(real: ChannelRealization, estimate: ChannelEstimate, layout: PilotLayout) -> TrialResult:
    match = match_toas(real.nominal_toas, estimate.support.toas, real.kernel.tau / layout.D)
    estimated = np.empty_like(real.nominal_toas)
    for k, j in match.pairs:
        estimated[k] = estimate.support.toas[j]
    return TrialResult(
        true_toas=real.nominal_toas,
        estimated_toas=estimated,
        squared_errors=(match.errors / real.kernel.tau) ** 2,
    )


def _rmse(results: Sequence[TrialResult], path: int) -> float:
    errors = [r.squared_errors[path] for r in results if r.squared_errors is not None]
    return math.sqrt(stable_mean(errors)) if errors else math.nan


def separable_bound(
    kernel: KernelConfig, layout: PilotLayout, path: PathSpec, sigma2: float, antennas: int
) -> float:
    domain = pilot_domain(kernel, layout.M, layout.D, sigma2)
    dilated = math.fmod(layout.D * path.toa, kernel.tau)
    value = dsnr(path.expected_amplitude, dilated, domain.sigma2, domain.kernel)
    return crb_rayleigh_single_path(np.eye(antennas), value, domain.kernel.N) / layout.D**2


def conditional_bound(
    real: ChannelRealization, layout: PilotLayout, path: int, sigma2: float
) -> float:
    kernel = real.kernel
    domain = pilot_domain(kernel, layout.M, layout.D, sigma2)
    dilated = math.fmod(layout.D * real.nominal_toas[path], kernel.tau)
    return crb_conditional_single_path(real.gains[path], dilated, domain.sigma2, domain.kernel) / layout.D**2


def pilot_coefficients(
    real: ChannelRealization,
    sigma2: float,
    layout: PilotLayout,
    rng: np.random.Generator,
) -> ComplexMatrix:
    samples = sample_received(real, sigma2, seed=rng)
    return extract_channel_dft(samples, layout, real.kernel)


def run_experiment_a(cfg: ExperimentConfig, *, threads: int = 1) -> ResultTable:
    kernel, layout = _frame(cfg)
    settings = cfg.experiment_a
    paths = [
        PathSpec(toa=settings.first_toa, expected_amplitude=1.0),
        PathSpec(
            toa=settings.first_toa + settings.separation_steps * kernel.sampling_step,
            expected_amplitude=settings.amplitude_ratio,
        ),
    ]
    amplitudes = [p.expected_amplitude for p in paths]
    table = ResultTable(
        name="experiment_a",
        columns=("P", "snr_db", "method", "cadzow_iters", "path", "rmse", "crb", "regime", "trials", "failures"),
    )

    for P in settings.antennas:
        for point, snr_db in enumerate(cfg.snr_db):
            sigma2 = noise_variance(amplitudes, kernel, snr_db)
            logger.info("experiment a: P=%d snr=%.1f dB", P, snr_db)

            def trial(index: int) -> tuple[list[TrialResult | None], list[float]]:
                rng = trial_rng(cfg.seed, EXPERIMENT_A, P, point, index)
                real = sample_channel(kernel, paths, antennas=P, seed=rng)
                coeffs = pilot_coefficients(real, sigma2, layout, rng)
                scored: list[TrialResult | None] = []
                for variant in settings.variants:
                    try:
                        estimate = _estimate(cfg, coeffs, layout, kernel, len(paths), variant.method, variant.cadzow_iters)
                    except NumericalError as exc:
                        logger.warning("experiment a trial %d failed: %s", index, exc)
                        scored.append(None)
                        continue
                    scored.append(_score(real, estimate, layout))
                conditional = [conditional_bound(real, layout, k, sigma2) for k in range(len(paths))] if P == 1 else []
                return scored, conditional

            outcomes = map_trials(trial, cfg.trials, threads)
            for k, path in enumerate(paths):
                if P == 1:
                    bound, regime = stable_mean(o[1][k] for o in outcomes), "conditional"
                else:
                    bound, regime = separable_bound(kernel, layout, path, sigma2, P), "rayleigh-separable"
                for v, variant in enumerate(settings.variants):
                    results = [o[0][v] for o in outcomes if o[0][v] is not None]
                    table.add(
                        P,
                        float(snr_db),
                        variant.method,
                        variant.cadzow_iters,
                        k + 1,
                        _rmse(results, k),
                        math.sqrt(bound),
                        regime,
                        cfg.trials,
                        cfg.trials - len(results),
                    )
    return table


def run_experiment_b(cfg: ExperimentConfig, *, threads: int = 1) -> ResultTable:
    kernel, layout = _frame(cfg)
    settings = cfg.experiment_b
    P = settings.antennas
    T = kernel.sampling_step
    table = ResultTable(
        name="experiment_b",
        columns=(
            "separation_steps",
            "epsilon_steps",
            "snr_db",
            "path",
            "rmse",
            "crb_separable",
            "crb_full",
            "crb_full_stderr",
            "trials",
            "failures",
        ),
    )

    for s, separation in enumerate(settings.separation_steps):
        paths = [
            PathSpec(toa=settings.first_toa, expected_amplitude=1.0),
            PathSpec(toa=settings.first_toa + separation * T, expected_amplitude=1.0),
        ]
        for point, snr_db in enumerate(cfg.snr_db):
            sigma2 = noise_variance([1.0, 1.0], kernel, snr_db)
            domain = pilot_domain(kernel, layout.M, layout.D, sigma2)
            dilated = [
                PathSpec(toa=math.fmod(layout.D * p.toa, kernel.tau), expected_amplitude=p.expected_amplitude)
                for p in paths
            ]
            full = crb_monte_carlo(
                dilated,
                domain.sigma2,
                domain.kernel,
                settings.fisher_trials,
                seed=cfg.seed,
                antennas=P,
                threads=threads,
            )
            separable = [separable_bound(kernel, layout, p, sigma2, P) for p in paths]

            for e, epsilon in enumerate(settings.epsilon_steps):
                logger.info("experiment b: sep=%gT eps=%gT snr=%.1f dB", separation, epsilon, snr_db)

                def trial(index: int) -> TrialResult | None:
                    rng = trial_rng(cfg.seed, EXPERIMENT_B, s, e, point, index)
                    real = sample_channel(kernel, paths, antennas=P, epsilon=epsilon * T, seed=rng)
                    coeffs = pilot_coefficients(real, sigma2, layout, rng)
                    try:
                        return _score(real, _estimate(cfg, coeffs, layout, kernel, len(paths)), layout)
                    except NumericalError as exc:
                        logger.warning("experiment b trial %d failed: %s", index, exc)
                        return None

                results = [r for r in map_trials(trial, cfg.trials, threads) if r is not None]
                for k in range(len(paths)):
                    table.add(
                        float(separation),
                        float(epsilon),
                        float(snr_db),
                        k + 1,
                        _rmse(results, k),
                        math.sqrt(separable[k]),
                        math.sqrt(full.toa[k]) / layout.D,
                        full.toa_stderr[k] / (2 * math.sqrt(full.toa[k])) / layout.D,
                        cfg.trials,
                        cfg.trials - len(results),
                    )
    return table


def qam4_modulate(bits: npt.NDArray[np.integer]) -> ComplexMatrix:
    """Gray-mapped unit-energy 4-QAM, one symbol per pair of bits."""
    pairs = np.asarray(bits).reshape(-1, 2)
    return ((1 - 2 * pairs[:, 0]) + 1j * (1 - 2 * pairs[:, 1])) / math.sqrt(2.0)


def qam4_demodulate(symbols: npt.ArrayLike) -> npt.NDArray[np.int64]:
    values = np.asarray(symbols)
    return np.stack([values.real < 0, values.imag < 0], axis=1).astype(np.int64)


def zero_forcing(received: ComplexMatrix, response: ComplexMatrix) -> ComplexMatrix:
    """Per-carrier combining x̂ = ĥ*y / ‖ĥ‖² over the receive antennas."""
    energy = np.sum(np.abs(response) ** 2, axis=1)
    combined = np.sum(response.conj() * received, axis=1)
    return np.divide(combined, energy, out=np.zeros_like(combined), where=energy > 0)


def data_carriers(kernel: KernelConfig, layout: PilotLayout) -> npt.NDArray[np.int64]:
    band = np.arange(-kernel.M, kernel.M + 1)
    return band[~np.isin(band, pilot_dft_indices(layout))]


def half_pilot_rows(layout: PilotLayout, count: int) -> slice:
    """Contiguous window of ``count`` pilots nearest the carrier, from g = -count//2."""
    grid = pilot_grid(layout)
    if count > grid.size:
        raise ConfigError(f"cannot keep {count} of {grid.size} pilots")
    start = int(np.argmin(np.abs(grid + count // 2)))
    return slice(start, start + count)


def run_experiment_c(cfg: ExperimentConfig, *, threads: int = 1) -> ResultTable:
    kernel, layout = _frame(cfg)
    settings = cfg.experiment_c
    scene = cfg.scene.to_scene()
    paths = scene.paths()
    K = len(paths)
    epsilon = settings.epsilon_steps * kernel.sampling_step
    data = data_carriers(kernel, layout)
    pilots = pilot_dft_indices(layout)
    half = half_pilot_rows(layout, settings.half_pilots)
    methods = list(settings.methods)
    table = ResultTable(
        name="experiment_c",
        columns=("method", "snr_db", "ser", "symbol_errors", "symbols", "trials", "failures"),
    )

    def response(method: str, coeffs: ComplexMatrix) -> ComplexMatrix:
        if method == "lowpass":
            return lowpass_interpolate(coeffs, layout, kernel, indices=data)
        if method == "fri-independent":
            return _estimate(cfg, coeffs, layout, kernel, K, estimator=independent_fri).frequency_response(data)
        if method == "scs-fri-half-pilots":
            return _estimate(cfg, coeffs, layout, kernel, K, rows=half).frequency_response(data)
        return _estimate(cfg, coeffs, layout, kernel, K).frequency_response(data)

    for point, snr_db in enumerate(cfg.snr_db):
        sigma2 = noise_variance([p.expected_amplitude for p in paths], kernel, snr_db)
        logger.info("experiment c: snr=%.1f dB", snr_db)

        def trial(index: int) -> list[TrialResult | None]:
            rng = trial_rng(cfg.seed, EXPERIMENT_C, point, index)
            real = sample_channel(kernel, paths, scene=scene, epsilon=epsilon, seed=rng)
            bits = rng.integers(0, 2, size=(data.size, 2))
            spectrum = np.zeros(kernel.N, dtype=np.complex128)
            spectrum[dft_bin(pilots, kernel.N)] = 1.0
            spectrum[dft_bin(data, kernel.N)] = qam4_modulate(bits)
            samples = sample_received(real, sigma2, seed=rng, waveform=np.fft.ifft(spectrum))

            coeffs = extract_channel_dft(samples, layout, kernel)
            received = sample_dft(samples)[dft_bin(data, kernel.N)] / kernel.flat_gain
            scored: list[TrialResult | None] = []
            for method in methods:
                try:
                    estimate = response(method, coeffs)
                except NumericalError as exc:
                    logger.warning("experiment c %s trial %d failed: %s", method, index, exc)
                    scored.append(None)
                    continue
                decided = qam4_demodulate(zero_forcing(received, estimate))
                scored.append(
                    TrialResult(
                        true_toas=real.nominal_toas,
                        estimated_toas=None,
                        squared_errors=None,
                        symbol_errors=int(np.count_nonzero(np.any(decided != bits, axis=1))),
                        symbols=data.size,
                    )
                )
            return scored

        outcomes = map_trials(trial, cfg.trials, threads)
        for m, method in enumerate(methods):
            failures = sum(1 for o in outcomes if o[m] is None)
            symbol_errors = sum(data.size if o[m] is None else o[m].symbol_errors for o in outcomes)
            symbols = data.size * cfg.trials
            table.add(method, float(snr_db), symbol_errors / symbols, symbol_errors, symbols, cfg.trials, failures)
    return table


def crb_table(cfg: ExperimentConfig) -> ResultTable:
    """P = 1 uses the plug-in SNR; larger arrays average over uncorrelated Rayleigh fading."""
    kernel, layout = _frame(cfg)
    amplitude = 1.0
    table = ResultTable(
        name="crb",
        columns=("P", "snr_db", "regime", "bound_toa", "bound_amp", "trials", "stderr", "rmse_toa"),
    )
    for P in cfg.experiment_a.antennas:
        fading = 1.0 if P == 1 else expected_inverse_quadratic(np.ones(P))
        for snr_db in cfg.snr_db:
            sigma2 = noise_variance([amplitude], kernel, snr_db)
            domain = pilot_domain(kernel, layout.M, layout.D, sigma2)
            report = crb_scattered(
                layout.M,
                layout.D,
                domain.kernel.bandwidth * domain.kernel.sampling_step,
                fading / effective_snr([amplitude], domain.sigma2),
                list(1.0 / peak_snr(np.full(P, amplitude), domain.sigma2)),
                regime="deterministic" if P == 1 else "rayleigh-separable",
            )
            table.add(
                P,
                float(snr_db),
                report.regime,
                report.toa[0],
                stable_mean(report.amplitude),
                report.monte_carlo_trials,
                0.0,
                report.toa_rmse[0],
            )
    return table


def simulate(cfg: ExperimentConfig, snr_db: float) -> Simulation:
    kernel = cfg.kernel.to_kernel()
    layout = cfg.pilots.to_layout()
    scene = cfg.scene.to_scene()
    paths = scene.paths()
    rng = trial_rng(cfg.seed, SIMULATION)
    real = sample_channel(kernel, paths, scene=scene, seed=rng)
    sigma2 = noise_variance([p.expected_amplitude for p in paths], kernel, snr_db)

    waveform = None
    if layout.kind == "wht":
        waveform = wht_pilot_waveform(int(layout.wht_n), int(layout.wht_ell))  # type: ignore[arg-type]
    samples = sample_received(real, sigma2, seed=rng, waveform=waveform)
    return Simulation(
        realization=real,
        sigma2=sigma2,
        samples=samples,
        coefficients=extract_channel_dft(samples, layout, kernel),
        grid=pilot_grid(layout),
    )
