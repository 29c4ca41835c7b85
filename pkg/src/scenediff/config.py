"""Pipeline configuration with file and flag overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .errors import InvalidSpec


@dataclass(frozen=True)
class PipelineConfig:
    """All tunables of the detection pipeline.

    Defaults reproduce the reference operating point. ``threshold_mode`` is
    either "kapur" (entropy split of the pooled region scores) or "fixed"
    (compare against ``fixed_tau``).
    """

    tau_occ: float = -0.02
    weight_geom: float = 1.0
    weight_feat: float = 0.5
    weight_region: float = 0.2
    covis_threshold: float = 0.5
    covis_slack: float = 0.01
    exclude_frac: float = 0.6
    exclude_on: str = "masked"
    sigma_geo: float = 0.02
    sigma_merge: float = 1.4
    tau_sim: float = 0.7
    voxel_size: float = 0.02
    threshold_mode: str = "kapur"
    fixed_tau: float = 0.2
    kapur_bins: int = 256
    workers: int = 1

    def __post_init__(self):
        if self.threshold_mode not in ("kapur", "fixed"):
            raise InvalidSpec(f"unknown threshold mode {self.threshold_mode!r}")
        if self.exclude_on not in ("masked", "unmasked"):
            raise InvalidSpec(f"exclude_on must be 'masked' or 'unmasked'")
        if not 0.0 <= self.covis_threshold <= 1.0:
            raise InvalidSpec("covis_threshold must lie in [0, 1]")
        if not 0.0 <= self.exclude_frac <= 1.0:
            raise InvalidSpec("exclude_frac must lie in [0, 1]")
        if self.voxel_size <= 0:
            raise InvalidSpec("voxel_size must be positive")
        if self.sigma_geo <= 0:
            raise InvalidSpec("sigma_geo must be positive")
        if self.kapur_bins < 2:
            raise InvalidSpec("kapur_bins must be at least 2")
        if self.workers < 1:
            raise InvalidSpec("workers must be at least 1")

    @property
    def weights(self) -> tuple[float, float, float]:
        return (self.weight_geom, self.weight_feat, self.weight_region)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(data) - known
        if extra:
            raise InvalidSpec(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str) -> "PipelineConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidSpec(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(data, dict):
            raise InvalidSpec(f"config file {path} must hold a JSON object")
        return cls.from_dict(data)

    def with_overrides(self, **kwargs) -> "PipelineConfig":
        """New config with only the explicitly-set fields replaced."""
        updates = {k: v for k, v in kwargs.items() if v is not None}
        return dataclasses.replace(self, **updates)
