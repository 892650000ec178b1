from __future__ import annotations

import hashlib
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from scsfri.channel import KernelConfig, Scatterer, ScattererScene, kappa_from_geometry
from scsfri.errors import ConfigError
from scsfri.estimator import Method
from scsfri.pilots import LayoutKind, PilotLayout

ExperimentMethod = Literal["scs-fri", "fri-independent", "lowpass", "scs-fri-half-pilots"]

SPEED_OF_LIGHT = 299_792_458.0


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class KernelSettings(_Section):
    sampling_step: float = Field(default=50e-9, gt=0)
    N: int = Field(default=511, ge=3)
    M: int = Field(default=255, ge=1)

    @model_validator(mode="after")
    def _check_band(self) -> KernelSettings:
        if self.N < 2 * self.M + 1:
            raise ValueError("N must be >= 2M+1")
        return self

    def to_kernel(self) -> KernelConfig:
        return KernelConfig.from_sampling(self.sampling_step, self.N, self.M)


class PilotSettings(_Section):
    kind: LayoutKind = "scattered-dft"
    M: int = Field(default=31, ge=1)
    D: int = Field(default=8, ge=1)
    wht_n: int | None = None
    wht_ell: int | None = None
    delay_spread: float | None = Field(default=1.6e-6, gt=0)

    @model_validator(mode="after")
    def _check_wht(self) -> PilotSettings:
        if self.kind == "wht" and (self.wht_n is None or self.wht_ell is None):
            raise ValueError("wht layouts need wht_n and wht_ell")
        return self

    def to_layout(self) -> PilotLayout:
        if self.kind == "wht":
            return PilotLayout.wht(int(self.wht_n or 0), int(self.wht_ell or 0))
        if self.kind == "contiguous-dft":
            return PilotLayout.contiguous(self.M)
        return PilotLayout.scattered(self.M, self.D, self.delay_spread)


class EstimatorSettings(_Section):
    method: Method = "esprit"
    cadzow_iters: int = Field(default=3, ge=0)
    K: int = Field(default=2, ge=1)
    L: int | None = Field(default=None, ge=1)


class ScattererSettings(_Section):
    azimuth_deg: float
    distance: float = Field(gt=0)
    width: float = Field(gt=0)
    toa: float = Field(ge=0)
    amplitude: float = Field(ge=0)

    def to_scatterer(self) -> Scatterer:
        return Scatterer(
            azimuth=math.radians(self.azimuth_deg),
            kappa=kappa_from_geometry(self.distance, self.width),
            toa=self.toa,
            amplitude=self.amplitude,
        )


def _default_scatterers() -> list[ScattererSettings]:
    # Invented scene: four clusters inside the 1.6 µs delay spread.
    return [
        ScattererSettings(azimuth_deg=20.0, distance=30.0, width=3.0, toa=0.20e-6, amplitude=1.0),
        ScattererSettings(azimuth_deg=110.0, distance=45.0, width=5.0, toa=0.55e-6, amplitude=0.7),
        ScattererSettings(azimuth_deg=200.0, distance=60.0, width=4.0, toa=0.95e-6, amplitude=0.5),
        ScattererSettings(azimuth_deg=290.0, distance=80.0, width=8.0, toa=1.40e-6, amplitude=0.35),
    ]


class SceneSettings(_Section):
    antennas: int = Field(default=5, ge=1)
    radius: float = Field(default=0.1, ge=0)
    carrier_frequency: float = Field(default=2.6e9, gt=0)
    wave_speed: float = Field(default=SPEED_OF_LIGHT, gt=0)
    scatterers: list[ScattererSettings] = Field(default_factory=_default_scatterers, min_length=1)

    def to_scene(self) -> ScattererScene:
        return ScattererScene.ring(
            self.antennas,
            self.radius,
            carrier_frequency=self.carrier_frequency,
            wave_speed=self.wave_speed,
            scatterers=[s.to_scatterer() for s in self.scatterers],
        )


class VariantSettings(_Section):
    method: Method
    cadzow_iters: int = Field(ge=0)


def _default_variants() -> list[VariantSettings]:
    return [
        VariantSettings(method=method, cadzow_iters=iters)
        for iters in (0, 3)
        for method in ("prony", "esprit")
    ]


class ExperimentASettings(_Section):
    antennas: list[int] = Field(default_factory=lambda: [1, 2, 4, 8], min_length=1)
    first_toa: float = Field(default=0.5e-6, ge=0)
    separation_steps: float = Field(default=2.0, gt=0)
    amplitude_ratio: float = Field(default=0.1, gt=0)
    variants: list[VariantSettings] = Field(default_factory=_default_variants, min_length=1)


class ExperimentBSettings(_Section):
    antennas: int = Field(default=4, ge=2)
    first_toa: float = Field(default=0.5e-6, ge=0)
    separation_steps: list[float] = Field(default_factory=lambda: [1.0, 2.0], min_length=1)
    epsilon_steps: list[float] = Field(default_factory=lambda: [0.0, 0.02], min_length=1)
    fisher_trials: int = Field(default=2000, ge=100)


class ExperimentCSettings(_Section):
    methods: list[ExperimentMethod] = Field(
        default_factory=lambda: ["scs-fri", "fri-independent", "lowpass", "scs-fri-half-pilots"],
        min_length=1,
    )
    epsilon_steps: float = Field(default=0.02, ge=0)
    half_pilots: int = Field(default=32, ge=2)


class ExperimentConfig(_Section):
    kernel: KernelSettings = Field(default_factory=KernelSettings)
    pilots: PilotSettings = Field(default_factory=PilotSettings)
    estimator: EstimatorSettings = Field(default_factory=EstimatorSettings)
    scene: SceneSettings = Field(default_factory=SceneSettings)
    experiment_a: ExperimentASettings = Field(default_factory=ExperimentASettings)
    experiment_b: ExperimentBSettings = Field(default_factory=ExperimentBSettings)
    experiment_c: ExperimentCSettings = Field(default_factory=ExperimentCSettings)
    snr_db: list[float] = Field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0], min_length=1)
    trials: int = Field(default=400, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)

    def with_overrides(self, *, seed: int | None = None, trials: int | None = None) -> ExperimentConfig:
        updates: dict[str, int] = {}
        if seed is not None:
            updates["seed"] = seed
        if trials is not None:
            updates["trials"] = trials
        try:
            return ExperimentConfig.model_validate({**self.model_dump(), **updates})
        except ValidationError as exc:
            raise ConfigError(str(exc)) from exc


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(cfg.model_dump_json().encode("utf-8")).hexdigest()[:16]


def default_config_path() -> Path:
    return Path(__file__).resolve().parent / "configs" / "reference.toml"


def load_config(path: str | Path | None = None) -> ExperimentConfig:
    source = default_config_path() if path is None else Path(path)
    try:
        with source.open("rb") as handle:
            data = tomllib.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {source}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {source}: {exc}") from exc

    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid config {source}:\n{exc}") from exc
