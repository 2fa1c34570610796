from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, Field, ValidationError, model_validator
from pydantic_settings import (
    BaseSettings,
    EnvSettingsSource,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    TomlConfigSettingsSource,
)

from fas_toolbox.errors import UsageError

Profile = Literal["paper_scale", "desk_scale"]


class DomainSettings(BaseModel):
    """Overlay statistics of one synthetic capture domain."""

    name: str
    frequency: float = Field(gt=0.0, lt=0.5, description="Overlay frequency in cycles per pixel")
    orientation: float = Field(description="Overlay orientation in degrees")
    amplitude: float = Field(default=0.1, gt=0.0, le=0.3)
    brightness: float = Field(default=0.0, ge=-0.15, le=0.15, description="Domain-level luminance shift")


class SynthSettings(BaseModel):
    domains: list[DomainSettings] = Field(
        default_factory=lambda: [
            DomainSettings(name="A", frequency=0.35, orientation=30.0, brightness=0.0),
            DomainSettings(name="B", frequency=0.42, orientation=105.0, brightness=0.06),
            DomainSettings(name="C", frequency=0.30, orientation=70.0, brightness=-0.05),
        ]
    )
    identities_per_domain: int = Field(default=12, ge=1)
    captures_per_identity: int = Field(default=2, ge=1)
    image_size: int = Field(default=64, ge=32)
    attack_type: str = "replay"


class DataSettings(BaseModel):
    padding: float = Field(default=0.6, ge=0.0)
    workers: int = Field(default=4, ge=1)


class CropSettings(BaseModel):
    strategy: Literal["random", "center", "left_up"] = "random"
    scale_min: float = Field(default=0.2, gt=0.0, le=1.0)
    scale_max: float = Field(default=1.0, gt=0.0, le=1.0)
    output_size: int = Field(default=224, ge=8)

    @model_validator(mode="after")
    def _check_scale_order(self) -> CropSettings:
        if self.scale_min > self.scale_max:
            raise ValueError(f"scale_min {self.scale_min} > scale_max {self.scale_max}")
        return self


class PCGANSettings(BaseModel):
    image_size: int = 1024
    content_dim: int = 8
    pattern_channels: int = 8
    base_channels: int = 64
    max_channels: int = 256
    lr: float = Field(default=1e-6, ge=0.0)
    betas: tuple[float, float] = (0.9, 0.999)
    batch_size: int = Field(default=1, ge=1)
    iterations: int = Field(default=4000, ge=1)
    r1_weight: float = Field(default=10.0, ge=0.0)
    n_crops: int = Field(default=8, ge=1)
    n_reference_crops: int = Field(default=4, ge=1)
    crop_min_frac: float = Field(default=0.125, gt=0.0, le=1.0)
    crop_max_frac: float = Field(default=0.25, gt=0.0, le=1.0)
    patch_size: int = 64
    checkpoint_every: int = Field(default=500, ge=1)
    log_every: int = Field(default=50, ge=1)
    history_size: int = Field(default=1000, ge=1)
    resume_tolerance: float = Field(default=0.5, ge=0.0, description="Allowed relative jump of the total loss on resume")


class ConvertSettings(BaseModel):
    direction: Literal["both", "spoof_to_live", "live_to_spoof"] = "both"
    same_domain: bool = True
    replace_live: bool = False


class PMNSettings(BaseModel):
    backbone: Literal["tiny", "open_clip"] = "open_clip"
    clip_model: str = "ViT-B-16"
    clip_pretrained: str = "openai"
    embed_dim: int = 512
    feature_dim: int = 512
    input_size: int = 224
    logit_scale_init: float = math.log(1 / 0.07)
    lr: float = Field(default=1e-6, ge=0.0)
    betas: tuple[float, float] = (0.9, 0.999)
    alpha: float = Field(default=0.2, ge=0.0)
    beta: float = Field(default=1e-6, ge=0.0)
    batch_size: int = Field(default=1, ge=1)
    epochs: int = Field(default=20, ge=1)
    steps_per_epoch: int = Field(default=150, ge=1)
    center_update_rate: float = Field(default=0.5, ge=0.0, le=1.0)
    use_clip_loss: bool = True
    use_patch_loss: bool = True
    use_center_loss: bool = True
    use_synthetic: bool = True
    log_every: int = Field(default=50, ge=1)


class EvalSettings(BaseModel):
    protocol: str = "AB→C"
    averaging: Literal["best_epoch", "last_k"] = "last_k"
    k: int = Field(default=10, ge=1)
    threshold_rule: Literal["eer", "fixed"] = "eer"
    fixed_threshold: float = Field(default=0.5, ge=0.0, le=1.0)


class VizSettings(BaseModel):
    canny_low: float = 50.0
    canny_high: float = 150.0
    hough_threshold_frac: float = Field(default=0.4, gt=0.0)
    rho_resolution: float = Field(default=1.0, gt=0.0)
    theta_resolution_deg: float = Field(default=1.0, gt=0.0)
    band_rel_width: float = Field(default=0.15, gt=0.0, lt=1.0)


PROFILE_OVERRIDES: dict[str, dict[str, Any]] = {
    "paper_scale": {},
    "desk_scale": {
        "crop": {"output_size": 64},
        "pcgan": {
            "image_size": 64,
            "base_channels": 32,
            "max_channels": 128,
            "patch_size": 16,
            "lr": 2e-3,
            "batch_size": 4,
        },
        "pmn": {
            "backbone": "tiny",
            "embed_dim": 64,
            "feature_dim": 32,
            "input_size": 64,
            "lr": 1e-3,
            "batch_size": 32,
        },
    },
}


class OutputRootEnvSource(EnvSettingsSource):
    """Environment source that only honours `FAS_TOOLBOX_OUTPUT_ROOT`."""

    def __call__(self) -> dict[str, Any]:
        return {key: value for key, value in super().__call__().items() if key == "output_root"}


class Config(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="FAS_TOOLBOX_", extra="forbid")

    seed: int = 0
    profile: Profile = "desk_scale"
    output_root: str = Path("./runs").as_posix()

    data: DataSettings = Field(default_factory=DataSettings)
    crop: CropSettings = Field(default_factory=CropSettings)
    synth: SynthSettings = Field(default_factory=SynthSettings)
    pcgan: PCGANSettings = Field(default_factory=PCGANSettings)
    convert: ConvertSettings = Field(default_factory=ConvertSettings)
    pmn: PMNSettings = Field(default_factory=PMNSettings)
    eval: EvalSettings = Field(default_factory=EvalSettings)
    viz: VizSettings = Field(default_factory=VizSettings)

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        return init_settings, OutputRootEnvSource(settings_cls)

    @classmethod
    def load(
        cls,
        config_file: str | Path | None = None,
        profile: Profile | None = None,
        **overrides: Any,
    ) -> Config:
        """Build a config from profile defaults, an optional TOML file and explicit overrides.

        Explicit overrides win over the file, the file wins over the profile defaults.
        `output_root` falls back to the `FAS_TOOLBOX_OUTPUT_ROOT` environment variable.
        """
        file_values: dict[str, Any] = {}
        if config_file is not None:
            path = Path(config_file).expanduser()
            if not path.is_file():
                raise UsageError(f"Config file not found: {path.as_posix()}")
            file_values = TomlConfigSettingsSource(cls, toml_file=path)()

        overrides = {key: value for key, value in overrides.items() if value is not None}
        chosen = profile or overrides.pop("profile", None) or file_values.get("profile") or "desk_scale"
        if chosen not in PROFILE_OVERRIDES:
            raise UsageError(f"Unknown profile: {chosen}")

        values = _deep_merge(PROFILE_OVERRIDES[chosen], file_values)
        values = _deep_merge(values, overrides)
        values["profile"] = chosen
        try:
            return cls(**values)
        except ValidationError as e:
            raise UsageError(f"Invalid configuration: {e}") from e

    @classmethod
    def for_profile(cls, profile: Profile) -> Config:
        return cls.load(profile=profile)

    def config_hash(self) -> str:
        payload = json.dumps(self.model_dump(mode="json", exclude={"output_root"}), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    @property
    def output_dir(self) -> Path:
        return Path(self.output_root).expanduser().resolve().absolute()


def _deep_merge(base: dict[str, Any], update: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


if __name__ == "__main__":
    print(Config.load())
